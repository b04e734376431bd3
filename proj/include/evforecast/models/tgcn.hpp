#pragma once

#include <string>

#include "evforecast/models/forecaster.hpp"
#include "evforecast/models/gcn.hpp"
#include "evforecast/models/lstm.hpp"

namespace evf {

/// Temporal graph-convolutional forecaster: at each lag the per-node demand
/// is filtered by a two-layer GCN over the normalized adjacency (widths
/// gcn_f0 -> gcn_f1, linear output), the flattened node features drive an
/// LSTM, and the final hidden state maps linearly to the horizon x nodes
/// forecast.
class TgcnModel : public NeuralForecaster {
public:
    TgcnModel(DenseArray normalized_adjacency, std::size_t lookback, std::size_t horizon,
              std::size_t gcn_f0 = 16, std::size_t gcn_f1 = 10, std::size_t hidden = 50)
        : a_hat_(std::move(normalized_adjacency)),
          n_nodes_(a_hat_.rows()),
          lookback_(lookback),
          horizon_(horizon),
          f0_(gcn_f0),
          f1_(gcn_f1),
          hidden_(hidden) {
        if (a_hat_.shape.size() != 2 || a_hat_.rows() != a_hat_.cols())
            throw ShapeError("TgcnModel: adjacency must be square, got " + shape_str(a_hat_.shape));
    }

    std::string kind() const override { return "tgcn"; }
    std::size_t lookback() const override { return lookback_; }
    std::size_t horizon() const override { return horizon_; }
    std::size_t spatial_dim() const override { return n_nodes_; }
    ParameterStore& params() override { return store_; }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        store_ = ParameterStore();
        store_.create("gcn.W0", glorot_matrix(1, f0_, rng));
        store_.create("gcn.W1", glorot_matrix(f0_, f1_, rng));
        init_lstm_params(store_, "lstm", n_nodes_ * f1_, hidden_, rng);
        store_.create("readout.W", glorot_matrix(hidden_, horizon_ * n_nodes_, rng));
        store_.create("readout.b", DenseArray::zeros({horizon_ * n_nodes_}));
    }

    Var forward_batch(Tape& t, const DenseArray& window_batch) override {
        if (window_batch.shape.size() != 3 || window_batch.shape[1] != lookback_ ||
            window_batch.shape[2] != n_nodes_)
            throw ShapeError("tgcn: window batch shape " + shape_str(window_batch.shape) +
                             " does not match [B," + std::to_string(lookback_) + "," +
                             std::to_string(n_nodes_) + "]");
        const std::size_t batch = window_batch.shape[0];
        Var windows = t.leaf(window_batch);
        Var a_hat = t.leaf(a_hat_);
        Var w0 = t.param(store_, "gcn.W0");
        Var w1 = t.param(store_, "gcn.W1");
        LstmVars lstm = bind_lstm(t, store_, "lstm");
        LstmState state = lstm_zero_state(t, batch, hidden_);
        for (std::size_t lag = 0; lag < lookback_; ++lag) {
            Var x_bn = t.reshape(t.slice(windows, 1, lag, 1), {batch, n_nodes_});
            Var x_nb = t.reshape(t.swap01(x_bn, batch, n_nodes_), {n_nodes_, batch});
            Var features = gcn_forward_batch_scalar(t, a_hat, x_nb, w0, w1);  // [B, N*F1]
            state = lstm_step(t, lstm, features, state);
        }
        Var out = t.matmul(state.h, t.param(store_, "readout.W"));
        return t.add_rowvec(out, t.param(store_, "readout.b"));  // [B, T*N]
    }

    const DenseArray& adjacency() const { return a_hat_; }

private:
    DenseArray a_hat_;
    std::size_t n_nodes_, lookback_, horizon_, f0_, f1_, hidden_;
    ParameterStore store_;
};

}  // namespace evf
