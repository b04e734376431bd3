#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "evforecast/array.hpp"

namespace evf {

/// Solves (A) X = B for SPD A in place via Cholesky; B may have several
/// columns. Throws if A is not positive definite (callers add ridge jitter
/// to guarantee it).
inline DenseArray cholesky_solve(DenseArray a, DenseArray b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n)
        throw std::invalid_argument("cholesky_solve: shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    const std::size_t m = b.cols();
    // lower-triangular factor stored in a
    for (std::size_t j = 0; j < n; ++j) {
        double d = a.at2(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a.at2(j, k) * a.at2(j, k);
        if (d <= 0.0)
            throw std::runtime_error("cholesky_solve: matrix not positive definite at pivot " +
                                     std::to_string(j));
        const double ljj = std::sqrt(d);
        a.at2(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a.at2(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a.at2(i, k) * a.at2(j, k);
            a.at2(i, j) = s / ljj;
        }
    }
    // forward then backward substitution per column
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b.at2(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= a.at2(i, k) * b.at2(k, c);
            b.at2(i, c) = s / a.at2(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = b.at2(i, c);
            for (std::size_t k = i + 1; k < n; ++k) s -= a.at2(k, i) * b.at2(k, c);
            b.at2(i, c) = s / a.at2(i, i);
        }
    }
    return b;
}

/// Ordinary least squares via normal equations with ridge jitter on the Gram
/// diagonal. design [S, P], target [S, M] -> coefficients [P, M].
inline DenseArray ols_fit(const DenseArray& design, const DenseArray& target, double ridge) {
    const std::size_t s = design.rows(), p = design.cols();
    DenseArray gram = DenseArray::zeros({p, p});
    matmul_tn_acc(design.data.data(), design.data.data(), gram.data.data(), p, s, p);
    for (std::size_t i = 0; i < p; ++i) gram.at2(i, i) += ridge;
    DenseArray xty = DenseArray::zeros({p, target.cols()});
    matmul_tn_acc(design.data.data(), target.data.data(), xty.data.data(), p, s, target.cols());
    return cholesky_solve(std::move(gram), std::move(xty));
}

/// Scalar autoregression of order p fit by OLS on [1, x_{t-1}, ..., x_{t-p}].
struct ArModel {
    std::size_t order = 0;
    std::vector<double> coef;  // intercept followed by lag-1..lag-p weights

    static ArModel fit(const std::vector<double>& series, std::size_t order = 30,
                       double ridge = 1e-8) {
        if (series.size() <= order)
            throw std::invalid_argument("ArModel::fit: series length " +
                                        std::to_string(series.size()) +
                                        " must exceed order " + std::to_string(order));
        const std::size_t samples = series.size() - order;
        DenseArray design = DenseArray::zeros({samples, order + 1});
        DenseArray target = DenseArray::zeros({samples, 1});
        for (std::size_t t = 0; t < samples; ++t) {
            design.at2(t, 0) = 1.0;
            for (std::size_t l = 1; l <= order; ++l)
                design.at2(t, l) = series[t + order - l];
            target.at2(t, 0) = series[t + order];
        }
        DenseArray c = ols_fit(design, target, ridge);
        return ArModel{order, std::move(c.data)};
    }

    /// Recursive multi-step forecast: each prediction becomes the next lag.
    std::vector<double> predict(const std::vector<double>& history, std::size_t horizon) const {
        if (history.size() < order)
            throw std::invalid_argument("ArModel::predict: history shorter than order " +
                                        std::to_string(order));
        std::vector<double> lags(history.end() - long(order), history.end());
        std::vector<double> out;
        out.reserve(horizon);
        for (std::size_t step = 0; step < horizon; ++step) {
            double v = coef[0];
            for (std::size_t l = 1; l <= order; ++l) v += coef[l] * lags[lags.size() - l];
            out.push_back(v);
            lags.push_back(v);
        }
        return out;
    }
};

/// Vector autoregression over K series: each series regressed on all series'
/// p lags plus an intercept, one shared design matrix, ridge always applied
/// (the 750-regressor default is singular without it).
struct VarModel {
    std::size_t order = 0;
    std::size_t dim = 0;
    DenseArray coef;  // [1 + order*dim, dim]

    static VarModel fit(const DenseArray& series, std::size_t order = 30, double ridge = 1e-4) {
        if (series.shape.size() != 2)
            throw std::invalid_argument("VarModel::fit: series must be [T, K]");
        const std::size_t len = series.rows(), k = series.cols();
        if (len <= order)
            throw std::invalid_argument("VarModel::fit: series length " + std::to_string(len) +
                                        " must exceed order " + std::to_string(order));
        const std::size_t samples = len - order;
        const std::size_t p_cols = 1 + order * k;
        DenseArray design = DenseArray::zeros({samples, p_cols});
        DenseArray target = DenseArray::zeros({samples, k});
        for (std::size_t t = 0; t < samples; ++t) {
            design.at2(t, 0) = 1.0;
            for (std::size_t l = 1; l <= order; ++l)
                for (std::size_t j = 0; j < k; ++j)
                    design.at2(t, 1 + (l - 1) * k + j) = series.at2(t + order - l, j);
            for (std::size_t j = 0; j < k; ++j) target.at2(t, j) = series.at2(t + order, j);
        }
        return VarModel{order, k, ols_fit(design, target, ridge)};
    }

    /// history [>=order, K] -> forecast [horizon, K], recursive.
    DenseArray predict(const DenseArray& history, std::size_t horizon) const {
        if (history.shape.size() != 2 || history.cols() != dim || history.rows() < order)
            throw std::invalid_argument("VarModel::predict: bad history shape " +
                                        shape_str(history.shape));
        std::vector<std::vector<double>> lags;  // most recent last
        for (std::size_t r = history.rows() - order; r < history.rows(); ++r) {
            std::vector<double> row(dim);
            for (std::size_t j = 0; j < dim; ++j) row[j] = history.at2(r, j);
            lags.push_back(std::move(row));
        }
        DenseArray out = DenseArray::zeros({horizon, dim});
        for (std::size_t step = 0; step < horizon; ++step) {
            std::vector<double> next(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                double v = coef.at2(0, j);
                for (std::size_t l = 1; l <= order; ++l) {
                    const auto& row = lags[lags.size() - l];
                    for (std::size_t i = 0; i < dim; ++i)
                        v += coef.at2(1 + (l - 1) * dim + i, j) * row[i];
                }
                next[j] = v;
            }
            for (std::size_t j = 0; j < dim; ++j) out.at2(step, j) = next[j];
            lags.push_back(std::move(next));
        }
        return out;
    }
};

}  // namespace evf
