#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "evforecast/array.hpp"
#include "evforecast/models/forecaster.hpp"
#include "evforecast/optim.hpp"
#include "evforecast/tape.hpp"

namespace evf {

struct WindowSpec {
    std::size_t lookback = 30;
    std::size_t horizon = 1;
    std::size_t stride = 1;
};

/// Supervised windows over a [L, D] series, materialized as one batch:
/// inputs [count, lookback, D], targets [count, horizon*D]. Window k uses
/// rows [k, k+lookback) as input and rows [k+lookback, k+lookback+horizon)
/// as target.
struct WindowSet {
    DenseArray inputs;
    DenseArray targets;
    std::size_t count = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t dim = 0;
};

inline WindowSet make_windows(const DenseArray& series, const WindowSpec& spec) {
    if (series.shape.size() != 2)
        throw std::invalid_argument("make_windows: series must be [L, D], got " +
                                    shape_str(series.shape));
    const std::size_t len = series.rows(), dim = series.cols();
    const std::size_t need = spec.lookback + spec.horizon;
    if (len < need)
        throw std::invalid_argument("make_windows: series length " + std::to_string(len) +
                                    " is too short, need at least lookback+horizon = " +
                                    std::to_string(need));
    WindowSet ws;
    ws.lookback = spec.lookback;
    ws.horizon = spec.horizon;
    ws.dim = dim;
    ws.count = (len - need) / spec.stride + 1;
    ws.inputs = DenseArray::zeros({ws.count, spec.lookback, dim});
    ws.targets = DenseArray::zeros({ws.count, spec.horizon * dim});
    for (std::size_t k = 0; k < ws.count; ++k) {
        const std::size_t start = k * spec.stride;
        std::copy_n(series.data.data() + start * dim, spec.lookback * dim,
                    ws.inputs.data.data() + k * spec.lookback * dim);
        std::copy_n(series.data.data() + (start + spec.lookback) * dim, spec.horizon * dim,
                    ws.targets.data.data() + k * spec.horizon * dim);
    }
    return ws;
}

/// Per-column min-max transform to [0, 1], fit on the training slice only.
/// Constant columns map to 0 and invert back to the constant.
struct ScalingTransform {
    std::vector<double> col_min;
    std::vector<double> col_max;

    static ScalingTransform fit(const DenseArray& train_slice) {
        if (train_slice.shape.size() != 2 || train_slice.rows() == 0)
            throw std::invalid_argument("ScalingTransform::fit: need a nonempty [L, D] slice");
        const std::size_t dim = train_slice.cols();
        ScalingTransform s;
        s.col_min.assign(dim, 0.0);
        s.col_max.assign(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) {
            double lo = train_slice.at2(0, j), hi = lo;
            for (std::size_t i = 1; i < train_slice.rows(); ++i) {
                lo = std::min(lo, train_slice.at2(i, j));
                hi = std::max(hi, train_slice.at2(i, j));
            }
            s.col_min[j] = lo;
            s.col_max[j] = hi;
        }
        return s;
    }

    std::size_t dim() const { return col_min.size(); }

    /// Applies column-wise to any array whose last dimension is dim().
    DenseArray apply(const DenseArray& a) const {
        DenseArray out = a;
        transform(out, true);
        return out;
    }

    DenseArray invert(const DenseArray& a) const {
        DenseArray out = a;
        transform(out, false);
        return out;
    }

private:
    void transform(DenseArray& a, bool forward) const {
        const std::size_t d = dim();
        if (a.size() % d != 0)
            throw std::invalid_argument("ScalingTransform: array size " + std::to_string(a.size()) +
                                        " not a multiple of " + std::to_string(d) + " columns");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::size_t j = i % d;
            const double range = col_max[j] - col_min[j];
            if (forward)
                a.data[i] = range > 0.0 ? (a.data[i] - col_min[j]) / range : 0.0;
            else
                a.data[i] = range > 0.0 ? a.data[i] * range + col_min[j] : col_min[j];
        }
    }
};

struct TrainConfig {
    std::size_t epochs = 1000;
    double lambda = 1e-3;       // l2 penalty weight
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    bool reinit = true;  // initialize model parameters from seed before training
};

struct TrainTrace {
    std::vector<double> epoch_loss;
};

struct DivergenceError : std::runtime_error {
    std::size_t epoch;
    explicit DivergenceError(std::size_t at_epoch)
        : std::runtime_error("training diverged: loss became non-finite at epoch " +
                             std::to_string(at_epoch)),
          epoch(at_epoch) {}
};

/// Mean absolute error over all entries plus lambda times the summed squared
/// parameters (eager form, for scoring and reports).
inline double loss_value(const DenseArray& pred, const DenseArray& target,
                         const ParameterStore& store, double lambda) {
    if (!pred.same_shape(target))
        throw ShapeError("loss: prediction shape " + shape_str(pred.shape) +
                         " does not match target " + shape_str(target.shape));
    double mae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mae += std::fabs(pred.data[i] - target.data[i]);
    mae /= double(pred.size());
    return mae + lambda * store.sum_squares();
}

/// Tape form of the same loss: mean |target - pred| + lambda * sum beta^2,
/// with the regularizer built from fresh parameter bindings so its gradient
/// accumulates alongside the prediction path's.
inline Var loss_on_tape(Tape& t, Var pred, Var target, ParameterStore& store, double lambda) {
    Var mae = t.mean(t.abs(t.sub(target, pred)));
    if (lambda == 0.0) return mae;
    Var penalty = t.scalar(0.0);
    for (const auto& e : store.entries()) {
        Var p = t.param(store, e.name);
        penalty = t.add(penalty, t.sum(t.hadamard(p, p)));
    }
    return t.add(mae, t.scale(penalty, lambda));
}

/// Full-batch Adam descent for exactly config.epochs epochs. Deterministic
/// under seed; records the loss after each update step's forward value.
inline TrainTrace train(NeuralForecaster& model, const WindowSet& windows,
                        const TrainConfig& config) {
    if (windows.count == 0) throw std::invalid_argument("train: no windows");
    if (config.epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
    if (config.reinit) model.init(config.seed);
    ParameterStore& store = model.params();
    AdamState adam(AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});
    TrainTrace trace;
    trace.epoch_loss.reserve(config.epochs);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Tape t;
        Var pred = model.forward_batch(t, windows.inputs);
        Var loss = loss_on_tape(t, pred, t.leaf(windows.targets), store, config.lambda);
        const double value = t.value(loss).data[0];
        if (!std::isfinite(value)) throw DivergenceError(epoch);
        store.zero_grad();
        t.backward(loss);
        adam.step(store);
        trace.epoch_loss.push_back(value);
    }
    return trace;
}

}  // namespace evf
