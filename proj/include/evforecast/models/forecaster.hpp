#pragma once

#include <memory>
#include <string>

#include "evforecast/params.hpp"
#include "evforecast/tape.hpp"

namespace evf {

/// Interface shared by the gradient-trained forecasters. A model maps a
/// lookback window of `lookback` days over `spatial_dim` series (stations or
/// raster cells) to a joint `horizon`-day forecast for those series.
///
/// forward_batch consumes a whole batch of windows as [B, lookback,
/// spatial_dim] and returns [B, horizon * spatial_dim]; predict is the
/// single-window convenience over the same code path, so training and
/// inference numerics are identical.
class NeuralForecaster {
public:
    virtual ~NeuralForecaster() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t lookback() const = 0;
    virtual std::size_t horizon() const = 0;
    virtual std::size_t spatial_dim() const = 0;

    virtual ParameterStore& params() = 0;
    const ParameterStore& params() const { return const_cast<NeuralForecaster*>(this)->params(); }

    /// (Re)initializes all parameters from the seed.
    virtual void init(std::uint64_t seed) = 0;

    virtual Var forward_batch(Tape& t, const DenseArray& window_batch) = 0;

    /// window is [lookback, spatial_dim]; result is [horizon, spatial_dim].
    DenseArray predict(const DenseArray& window) {
        if (window.shape.size() != 2 || window.shape[0] != lookback() ||
            window.shape[1] != spatial_dim())
            throw ShapeError(kind() + "::predict: window shape " + shape_str(window.shape) +
                             " does not match [" + std::to_string(lookback()) + "," +
                             std::to_string(spatial_dim()) + "]");
        Tape t;
        DenseArray batch({1, lookback(), spatial_dim()}, window.data);
        Var out = forward_batch(t, batch);
        return DenseArray({horizon(), spatial_dim()}, t.value(out).data);
    }
};

}  // namespace evf
