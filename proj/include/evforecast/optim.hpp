#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "evforecast/params.hpp"

namespace evf {

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment arrays are kept aligned with the
/// store's insertion order; the store must not gain or lose parameters
/// between steps.
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::size_t step_count() const { return t_; }

    void step(ParameterStore& store) {
        auto& entries = store.entries();
        if (m_.empty()) {
            for (const auto& e : entries) {
                m_.push_back(DenseArray::zeros(e.value.shape));
                v_.push_back(DenseArray::zeros(e.value.shape));
            }
        }
        if (m_.size() != entries.size())
            throw std::logic_error("AdamState: parameter count changed between steps");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t p = 0; p < entries.size(); ++p) {
            auto& value = entries[p].value.data;
            const auto& grad = entries[p].grad.data;
            auto& m = m_[p].data;
            auto& v = v_[p].data;
            for (std::size_t i = 0; i < value.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= cfg_.alpha * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<DenseArray> m_;
    std::vector<DenseArray> v_;
};

inline void sgd_step(ParameterStore& store, double lr) {
    for (auto& e : store.entries())
        for (std::size_t i = 0; i < e.value.size(); ++i) e.value.data[i] -= lr * e.grad.data[i];
}

}  // namespace evf
