#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "evforecast/params.hpp"
#include "evforecast/tape.hpp"

namespace evf {

/// A parameterized scalar function: builds a forward pass on the tape and
/// returns the scalar loss node. Must be deterministic in the store values.
using ScalarFn = std::function<Var(Tape&, ParameterStore&)>;

/// Compares reverse-mode gradients against central finite differences.
/// Returns the max over sampled coordinates of
///   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// When a parameter has more coordinates than `max_coords_per_param`, a
/// deterministic evenly-strided subset is checked (0 means check all).
inline double grad_check(const ScalarFn& f, ParameterStore& store, double eps = 1e-5,
                         std::size_t max_coords_per_param = 0) {
    // analytic pass
    store.zero_grad();
    {
        Tape tape;
        Var loss = f(tape, store);
        tape.backward(loss);
    }
    std::vector<DenseArray> analytic;
    analytic.reserve(store.size());
    for (const auto& e : store.entries()) analytic.push_back(e.grad);

    auto eval = [&]() {
        Tape tape;
        Var loss = f(tape, store);
        return tape.value(loss).data[0];
    };

    double worst = 0.0;
    for (std::size_t p = 0; p < store.entries().size(); ++p) {
        auto& value = store.entries()[p].value.data;
        std::size_t n = value.size();
        std::size_t stride = 1;
        if (max_coords_per_param > 0 && n > max_coords_per_param)
            stride = (n + max_coords_per_param - 1) / max_coords_per_param;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = value[i];
            value[i] = saved + eps;
            const double up = eval();
            value[i] = saved - eps;
            const double down = eval();
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[p].data[i];
            const double denom = std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace evf
