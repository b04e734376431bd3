#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evforecast/array.hpp"
#include "evforecast/params.hpp"

namespace evf {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    std::size_t idx = 0;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Reverse-mode tape over DenseArray values. A tape records one forward
/// pass; backward() may be called once per tape, after which a fresh tape
/// must be built for the next pass. Gradients of bound parameters are
/// accumulated into their ParameterStore slots (callers zero_grad() first).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(DenseArray v) {
        nodes_.push_back(Node{std::move(v), DenseArray{}, nullptr, nullptr, {}});
        return Var{this, nodes_.size() - 1};
    }

    Var scalar(double v) { return leaf(DenseArray::scalar(v)); }

    /// Leaf whose gradient is written back to store.grad(name) by backward().
    /// Binding the same parameter more than once in a pass accumulates.
    Var param(ParameterStore& store, const std::string& name) {
        Var v = leaf(store.value(name));
        nodes_[v.idx].store = &store;
        nodes_[v.idx].param_name = name;
        bound_.push_back(v.idx);
        return v;
    }

    const DenseArray& value(Var v) const { return nodes_.at(v.idx).value; }
    const DenseArray& grad(Var v) const { return nodes_.at(v.idx).grad; }
    const Shape& shape(Var v) const { return nodes_.at(v.idx).value.shape; }

    // ---- primitives ----

    Var matmul(Var a, Var b) {
        const DenseArray& A = val(a);
        const DenseArray& B = val(b);
        if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
            fail("matmul", A.shape, B.shape);
        std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
        DenseArray C = DenseArray::zeros({m, n});
        matmul_nn_acc(A.data.data(), B.data.data(), C.data.data(), m, k, n);
        return make(std::move(C), [this, a, b, m, k, n](const DenseArray& g) {
            // dA += g @ B^T ; dB += A^T @ g
            matmul_nt_acc(g.data.data(), val(b).data.data(), grad_buf(a), m, n, k);
            matmul_tn_acc(val(a).data.data(), g.data.data(), grad_buf(b), k, m, n);
        }, {a, b});
    }

    Var add(Var a, Var b) {
        const DenseArray& A = val(a);
        const DenseArray& B = val(b);
        if (!A.same_shape(B)) fail("add", A.shape, B.shape);
        DenseArray C = A;
        for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
        return make(std::move(C), [this, a, b](const DenseArray& g) {
            acc(a, g.data);
            acc(b, g.data);
        }, {a, b});
    }

    Var sub(Var a, Var b) {
        const DenseArray& A = val(a);
        const DenseArray& B = val(b);
        if (!A.same_shape(B)) fail("sub", A.shape, B.shape);
        DenseArray C = A;
        for (std::size_t i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
        return make(std::move(C), [this, a, b](const DenseArray& g) {
            acc(a, g.data);
            double* gb = grad_buf(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g.data[i];
        }, {a, b});
    }

    Var scale(Var a, double c) {
        DenseArray C = val(a);
        for (double& v : C.data) v *= c;
        return make(std::move(C), [this, a, c](const DenseArray& g) {
            double* ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g.data[i];
        }, {a});
    }

    Var hadamard(Var a, Var b) {
        const DenseArray& A = val(a);
        const DenseArray& B = val(b);
        if (!A.same_shape(B)) fail("hadamard", A.shape, B.shape);
        DenseArray C = A;
        for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
        return make(std::move(C), [this, a, b](const DenseArray& g) {
            double* ga = grad_buf(a);
            double* gb = grad_buf(b);
            const DenseArray& Av = val(a);
            const DenseArray& Bv = val(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g.data[i] * Bv.data[i];
                gb[i] += g.data[i] * Av.data[i];
            }
        }, {a, b});
    }

    /// [R,C] + [C] broadcast over rows (bias add).
    Var add_rowvec(Var m, Var row) {
        const DenseArray& M = val(m);
        const DenseArray& R = val(row);
        if (M.shape.size() != 2 || R.size() != M.shape[1]) fail("add_rowvec", M.shape, R.shape);
        DenseArray C = M;
        std::size_t rows = M.shape[0], cols = M.shape[1];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) C.data[r * cols + c] += R.data[c];
        return make(std::move(C), [this, m, row, rows, cols](const DenseArray& g) {
            acc(m, g.data);
            double* gr = grad_buf(row);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gr[c] += g.data[r * cols + c];
        }, {m, row});
    }

    /// [B,C,H,W] + [C] broadcast per channel.
    Var add_channel_bias(Var x, Var bias) {
        const DenseArray& X = val(x);
        const DenseArray& Bv = val(bias);
        if (X.shape.size() != 4 || Bv.size() != X.shape[1])
            fail("add_channel_bias", X.shape, Bv.shape);
        DenseArray C = X;
        std::size_t batch = X.shape[0], ch = X.shape[1], hw = X.shape[2] * X.shape[3];
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c) {
                double add = Bv.data[c];
                double* p = C.data.data() + (b * ch + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] += add;
            }
        return make(std::move(C), [this, x, bias, batch, ch, hw](const DenseArray& g) {
            acc(x, g.data);
            double* gb = grad_buf(bias);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t c = 0; c < ch; ++c) {
                    const double* p = g.data.data() + (b * ch + c) * hw;
                    double s = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) s += p[i];
                    gb[c] += s;
                }
        }, {x, bias});
    }

    Var sigmoid(Var a) {
        DenseArray C = val(a);
        for (double& v : C.data) v = 1.0 / (1.0 + std::exp(-v));
        return unary_from_output(std::move(C), a,
                                 [](double y, double g) { return g * y * (1.0 - y); });
    }

    Var tanh(Var a) {
        DenseArray C = val(a);
        for (double& v : C.data) v = std::tanh(v);
        return unary_from_output(std::move(C), a,
                                 [](double y, double g) { return g * (1.0 - y * y); });
    }

    Var relu(Var a) {
        DenseArray C = val(a);
        for (double& v : C.data) v = v > 0.0 ? v : 0.0;
        return unary_from_output(std::move(C), a,
                                 [](double y, double g) { return y > 0.0 ? g : 0.0; });
    }

    Var abs(Var a) {
        const DenseArray& A = val(a);
        DenseArray C = A;
        for (double& v : C.data) v = std::fabs(v);
        return make(std::move(C), [this, a](const DenseArray& g) {
            double* ga = grad_buf(a);
            const DenseArray& Av = val(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                double s = Av.data[i] > 0.0 ? 1.0 : (Av.data[i] < 0.0 ? -1.0 : 0.0);
                ga[i] += g.data[i] * s;
            }
        }, {a});
    }

    /// 2-D cross-correlation, stride 1, zero-padded to preserve H and W.
    /// input [B,Cin,H,W], kernels [F,Cin,kh,kw] -> [B,F,H,W].
    Var conv2d_same(Var input, Var kernels) {
        const DenseArray& X = val(input);
        const DenseArray& K = val(kernels);
        if (X.shape.size() != 4 || K.shape.size() != 4 || X.shape[1] != K.shape[1])
            fail("conv2d_same", X.shape, K.shape);
        std::size_t B = X.shape[0], Cin = X.shape[1], H = X.shape[2], W = X.shape[3];
        std::size_t F = K.shape[0], kh = K.shape[2], kw = K.shape[3];
        long ph = long(kh - 1) / 2, pw = long(kw - 1) / 2;
        DenseArray Y = DenseArray::zeros({B, F, H, W});
        auto xat = [&](std::size_t b, std::size_t c, long y, long x) -> double {
            if (y < 0 || x < 0 || y >= long(H) || x >= long(W)) return 0.0;
            return X.data[((b * Cin + c) * H + std::size_t(y)) * W + std::size_t(x)];
        };
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t y = 0; y < H; ++y)
                    for (std::size_t x = 0; x < W; ++x) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < Cin; ++c)
                            for (std::size_t dy = 0; dy < kh; ++dy)
                                for (std::size_t dx = 0; dx < kw; ++dx)
                                    s += xat(b, c, long(y + dy) - ph, long(x + dx) - pw) *
                                         K.data[((f * Cin + c) * kh + dy) * kw + dx];
                        Y.data[((b * F + f) * H + y) * W + x] = s;
                    }
        return make(std::move(Y),
                    [this, input, kernels, B, Cin, H, W, F, kh, kw, ph, pw](const DenseArray& g) {
            const DenseArray& X = val(input);
            const DenseArray& K = val(kernels);
            double* gx = grad_buf(input);
            double* gk = grad_buf(kernels);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t y = 0; y < H; ++y)
                        for (std::size_t x = 0; x < W; ++x) {
                            double go = g.data[((b * F + f) * H + y) * W + x];
                            if (go == 0.0) continue;
                            for (std::size_t c = 0; c < Cin; ++c)
                                for (std::size_t dy = 0; dy < kh; ++dy)
                                    for (std::size_t dx = 0; dx < kw; ++dx) {
                                        long iy = long(y + dy) - ph, ix = long(x + dx) - pw;
                                        if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W))
                                            continue;
                                        std::size_t xi =
                                            ((b * Cin + c) * H + std::size_t(iy)) * W + std::size_t(ix);
                                        gk[((f * Cin + c) * kh + dy) * kw + dx] += go * X.data[xi];
                                        gx[xi] += go * K.data[((f * Cin + c) * kh + dy) * kw + dx];
                                    }
                        }
        }, {input, kernels});
    }

    /// Same data, new shape (element count must match).
    Var reshape(Var a, Shape s) {
        const DenseArray& A = val(a);
        if (shape_size(s) != A.size()) fail("reshape", A.shape, s);
        DenseArray C(std::move(s), A.data);
        return make(std::move(C), [this, a](const DenseArray& g) { acc(a, g.data); }, {a});
    }

    Var flatten(Var a) {
        return reshape(a, {val(a).size()});
    }

    /// Contiguous slice along `axis`: keeps [start, start+len) of that axis.
    Var slice(Var a, std::size_t axis, std::size_t start, std::size_t len) {
        const DenseArray& A = val(a);
        if (axis >= A.shape.size() || start + len > A.shape[axis])
            throw ShapeError("slice: axis " + std::to_string(axis) + " start " +
                             std::to_string(start) + " len " + std::to_string(len) +
                             " out of range for shape " + shape_str(A.shape));
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= A.shape[i];
        for (std::size_t i = axis + 1; i < A.shape.size(); ++i) inner *= A.shape[i];
        std::size_t dim = A.shape[axis];
        Shape out_shape = A.shape;
        out_shape[axis] = len;
        DenseArray C = DenseArray::zeros(out_shape);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t l = 0; l < len; ++l)
                std::copy_n(A.data.data() + (o * dim + start + l) * inner, inner,
                            C.data.data() + (o * len + l) * inner);
        return make(std::move(C), [this, a, outer, inner, dim, start, len](const DenseArray& g) {
            double* ga = grad_buf(a);
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t l = 0; l < len; ++l) {
                    const double* src = g.data.data() + (o * len + l) * inner;
                    double* dst = ga + (o * dim + start + l) * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
        }, {a});
    }

    /// Views the value as [d0, d1, rest] and swaps the first two axes.
    Var swap01(Var a, std::size_t d0, std::size_t d1) {
        const DenseArray& A = val(a);
        if (d0 * d1 == 0 || A.size() % (d0 * d1) != 0)
            throw ShapeError("swap01: cannot view " + shape_str(A.shape) + " as [" +
                             std::to_string(d0) + "," + std::to_string(d1) + ",rest]");
        std::size_t rest = A.size() / (d0 * d1);
        DenseArray C = DenseArray::zeros({d1, d0, rest});
        for (std::size_t i = 0; i < d0; ++i)
            for (std::size_t j = 0; j < d1; ++j)
                std::copy_n(A.data.data() + (i * d1 + j) * rest, rest,
                            C.data.data() + (j * d0 + i) * rest);
        return make(std::move(C), [this, a, d0, d1, rest](const DenseArray& g) {
            double* ga = grad_buf(a);
            for (std::size_t i = 0; i < d0; ++i)
                for (std::size_t j = 0; j < d1; ++j) {
                    const double* src = g.data.data() + (j * d0 + i) * rest;
                    double* dst = ga + (i * d1 + j) * rest;
                    for (std::size_t r = 0; r < rest; ++r) dst[r] += src[r];
                }
        }, {a});
    }

    /// 2-D transpose.
    Var transpose(Var a) {
        const DenseArray& A = val(a);
        if (A.shape.size() != 2) fail("transpose", A.shape, {});
        Var s = swap01(a, A.shape[0], A.shape[1]);
        return reshape(s, {A.shape[1], A.shape[0]});
    }

    Var sum(Var a) {
        const DenseArray& A = val(a);
        double s = 0.0;
        for (double v : A.data) s += v;
        return make(DenseArray::scalar(s), [this, a](const DenseArray& g) {
            double* ga = grad_buf(a);
            std::size_t n = val(a).size();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g.data[0];
        }, {a});
    }

    Var mean(Var a) {
        const DenseArray& A = val(a);
        if (A.size() == 0) throw ShapeError("mean: empty operand");
        double s = 0.0;
        for (double v : A.data) s += v;
        double inv = 1.0 / double(A.size());
        return make(DenseArray::scalar(s * inv), [this, a, inv](const DenseArray& g) {
            double* ga = grad_buf(a);
            std::size_t n = val(a).size();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g.data[0] * inv;
        }, {a});
    }

    // ---- reverse sweep ----

    /// Seeds d(loss)/d(loss)=1 and propagates to every node, then adds each
    /// bound leaf's gradient into its ParameterStore slot. One call per tape.
    void backward(Var loss) {
        if (nodes_.empty()) throw std::logic_error("backward: no forward pass recorded");
        if (backward_done_)
            throw std::logic_error("backward: called twice on one tape; rebuild the forward pass");
        if (val(loss).size() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(val(loss).shape));
        backward_done_ = true;
        for (auto& n : nodes_) n.grad = DenseArray::zeros(n.value.shape);
        nodes_[loss.idx].grad.data[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backprop) nodes_[i].backprop(nodes_[i].grad);
        }
        for (std::size_t idx : bound_) {
            Node& n = nodes_[idx];
            DenseArray& slot = n.store->grad(n.param_name);
            for (std::size_t i = 0; i < slot.size(); ++i) slot.data[i] += n.grad.data[i];
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        DenseArray value;
        DenseArray grad;
        std::function<void(const DenseArray&)> backprop;
        ParameterStore* store;
        std::string param_name;
    };

    [[noreturn]] static void fail(const char* op, const Shape& a, const Shape& b) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
    }

    const DenseArray& val(Var v) const {
        if (v.tape != this) throw std::logic_error("Var used with a different tape");
        return nodes_[v.idx].value;
    }

    double* grad_buf(Var v) { return nodes_[v.idx].grad.data.data(); }

    void acc(Var v, const std::vector<double>& g) {
        double* dst = grad_buf(v);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    Var make(DenseArray value, std::function<void(const DenseArray&)> backprop,
             std::initializer_list<Var> parents) {
        for (Var p : parents)
            if (p.tape != this) throw std::logic_error("Var used with a different tape");
        nodes_.push_back(Node{std::move(value), DenseArray{}, std::move(backprop), nullptr, {}});
        return Var{this, nodes_.size() - 1};
    }

    /// Elementwise unary op whose derivative is a function of the output.
    Var unary_from_output(DenseArray value, Var a, double (*df)(double y, double g)) {
        Var out = make(std::move(value), nullptr, {a});
        std::size_t self = out.idx;
        nodes_[self].backprop = [this, a, self, df](const DenseArray& g) {
            const DenseArray& y = nodes_[self].value;
            double* ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += df(y.data[i], g.data[i]);
        };
        return out;
    }

    std::vector<Node> nodes_;
    std::vector<std::size_t> bound_;
    bool backward_done_ = false;
};

}  // namespace evf
