#pragma once

#include <string>

#include "evforecast/models/forecaster.hpp"
#include "evforecast/models/lstm.hpp"

namespace evf {

/// Raster forecaster with an explicit temporal stage: a shared convolution
/// (default 16 filters, Relu) extracts spatial features from each lag's
/// grid, the flattened feature maps drive an LSTM across lags, and the final
/// hidden state maps linearly to horizon x cells.
class CnnLstmModel : public NeuralForecaster {
public:
    CnnLstmModel(std::size_t grid_rows, std::size_t grid_cols, std::size_t lookback,
                 std::size_t horizon, std::size_t filters = 16, std::size_t kernel = 3,
                 std::size_t hidden = 50)
        : rows_(grid_rows),
          cols_(grid_cols),
          lookback_(lookback),
          horizon_(horizon),
          filters_(filters),
          kernel_(kernel),
          hidden_(hidden) {}

    std::string kind() const override { return "cnn_lstm"; }
    std::size_t lookback() const override { return lookback_; }
    std::size_t horizon() const override { return horizon_; }
    std::size_t spatial_dim() const override { return rows_ * cols_; }
    ParameterStore& params() override { return store_; }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        store_ = ParameterStore();
        store_.create("conv.K", glorot_uniform({filters_, 1, kernel_, kernel_}, kernel_ * kernel_,
                                               filters_ * kernel_ * kernel_, rng));
        store_.create("conv.b", DenseArray::zeros({filters_}));
        init_lstm_params(store_, "lstm", filters_ * rows_ * cols_, hidden_, rng);
        store_.create("readout.W", glorot_matrix(hidden_, horizon_ * rows_ * cols_, rng));
        store_.create("readout.b", DenseArray::zeros({horizon_ * rows_ * cols_}));
    }

    Var forward_batch(Tape& t, const DenseArray& window_batch) override {
        if (window_batch.shape.size() != 3 || window_batch.shape[1] != lookback_ ||
            window_batch.shape[2] != spatial_dim())
            throw ShapeError("cnn_lstm: window batch shape " + shape_str(window_batch.shape) +
                             " does not match [B," + std::to_string(lookback_) + "," +
                             std::to_string(spatial_dim()) + "]");
        const std::size_t batch = window_batch.shape[0];
        Var x = t.reshape(t.leaf(window_batch), {batch, lookback_, rows_, cols_});
        Var conv_k = t.param(store_, "conv.K");
        Var conv_b = t.param(store_, "conv.b");
        LstmVars lstm = bind_lstm(t, store_, "lstm");
        LstmState state = lstm_zero_state(t, batch, hidden_);
        for (std::size_t lag = 0; lag < lookback_; ++lag) {
            Var grid = t.slice(x, 1, lag, 1);  // [B, 1, H, W]
            Var feat = t.relu(t.add_channel_bias(t.conv2d_same(grid, conv_k), conv_b));
            Var flat = t.reshape(feat, {batch, filters_ * rows_ * cols_});
            state = lstm_step(t, lstm, flat, state);
        }
        Var out = t.matmul(state.h, t.param(store_, "readout.W"));
        return t.add_rowvec(out, t.param(store_, "readout.b"));  // [B, T*H*W]
    }

private:
    std::size_t rows_, cols_, lookback_, horizon_, filters_, kernel_, hidden_;
    ParameterStore store_;
};

}  // namespace evf
