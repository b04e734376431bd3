#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace evf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Row-major dense array of doubles. The workhorse operand type; shape is
/// carried at runtime and checked by every consumer.
struct DenseArray {
    Shape shape;
    std::vector<double> data;

    DenseArray() = default;
    DenseArray(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (shape_size(shape) != data.size())
            throw std::invalid_argument("DenseArray: shape " + shape_str(shape) + " does not match " +
                                        std::to_string(data.size()) + " values");
    }

    static DenseArray zeros(Shape s) {
        std::size_t n = shape_size(s);
        return DenseArray(std::move(s), std::vector<double>(n, 0.0));
    }

    static DenseArray full(Shape s, double v) {
        std::size_t n = shape_size(s);
        return DenseArray(std::move(s), std::vector<double>(n, v));
    }

    static DenseArray scalar(double v) { return DenseArray({1}, {v}); }

    static DenseArray identity(std::size_t n) {
        DenseArray m = zeros({n, n});
        for (std::size_t i = 0; i < n; ++i) m.data[i * n + i] = 1.0;
        return m;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const DenseArray& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// ---- raw matrix kernels (no tape involvement) ----

/// C += A @ B with A:[m,k], B:[k,n], C:[m,n].
inline void matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

/// C += A @ B^T with A:[m,k], B:[n,k], C:[m,n].
inline void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

/// C += A^T @ B with A:[k,m], B:[k,n], C:[m,n].
inline void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace evf
