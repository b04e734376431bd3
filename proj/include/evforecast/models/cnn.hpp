#pragma once

#include <string>

#include "evforecast/models/forecaster.hpp"

namespace evf {

/// Raster forecaster: lookback days stacked as input channels, one
/// same-padded convolution layer (default 16 filters, Relu), then a 1x1
/// linear convolution to horizon output channels.
class CnnModel : public NeuralForecaster {
public:
    CnnModel(std::size_t grid_rows, std::size_t grid_cols, std::size_t lookback,
             std::size_t horizon, std::size_t filters = 16, std::size_t kernel = 3)
        : rows_(grid_rows),
          cols_(grid_cols),
          lookback_(lookback),
          horizon_(horizon),
          filters_(filters),
          kernel_(kernel) {}

    std::string kind() const override { return "cnn"; }
    std::size_t lookback() const override { return lookback_; }
    std::size_t horizon() const override { return horizon_; }
    std::size_t spatial_dim() const override { return rows_ * cols_; }
    ParameterStore& params() override { return store_; }

    void init(std::uint64_t seed) override {
        Rng rng(seed);
        store_ = ParameterStore();
        store_.create("conv.K", glorot_uniform({filters_, lookback_, kernel_, kernel_},
                                               lookback_ * kernel_ * kernel_,
                                               filters_ * kernel_ * kernel_, rng));
        store_.create("conv.b", DenseArray::zeros({filters_}));
        store_.create("head.K", glorot_uniform({horizon_, filters_, 1, 1}, filters_, horizon_, rng));
        store_.create("head.b", DenseArray::zeros({horizon_}));
    }

    Var forward_batch(Tape& t, const DenseArray& window_batch) override {
        if (window_batch.shape.size() != 3 || window_batch.shape[1] != lookback_ ||
            window_batch.shape[2] != spatial_dim())
            throw ShapeError("cnn: window batch shape " + shape_str(window_batch.shape) +
                             " does not match [B," + std::to_string(lookback_) + "," +
                             std::to_string(spatial_dim()) + "]");
        const std::size_t batch = window_batch.shape[0];
        Var x = t.reshape(t.leaf(window_batch), {batch, lookback_, rows_, cols_});
        Var feat = t.relu(t.add_channel_bias(t.conv2d_same(x, t.param(store_, "conv.K")),
                                             t.param(store_, "conv.b")));
        Var out = t.add_channel_bias(t.conv2d_same(feat, t.param(store_, "head.K")),
                                     t.param(store_, "head.b"));  // [B, T, H, W]
        return t.reshape(out, {batch, horizon_ * rows_ * cols_});
    }

private:
    std::size_t rows_, cols_, lookback_, horizon_, filters_, kernel_;
    ParameterStore store_;
};

}  // namespace evf
