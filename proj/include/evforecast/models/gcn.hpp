#pragma once

#include "evforecast/tape.hpp"

namespace evf {

enum class Activation { linear, relu, tanh, sigmoid };

inline Var apply_activation(Tape& t, Var x, Activation act) {
    switch (act) {
        case Activation::linear: return x;
        case Activation::relu: return t.relu(x);
        case Activation::tanh: return t.tanh(x);
        case Activation::sigmoid: return t.sigmoid(x);
    }
    return x;
}

/// Two-layer graph convolution: act(A_hat * Relu(A_hat * X * W0) * W1).
/// X is [N, F_in], W0 [F_in, F0], W1 [F0, F1].
inline Var gcn_forward(Tape& t, Var a_hat, Var x, Var w0, Var w1,
                       Activation output_activation = Activation::linear) {
    Var h = t.relu(t.matmul(t.matmul(a_hat, x), w0));
    Var out = t.matmul(t.matmul(a_hat, h), w1);
    return apply_activation(t, out, output_activation);
}

/// Batched two-layer graph convolution for scalar node features (F_in = 1).
/// x_t is [N, B]: one column of per-node demand per window in the batch.
/// Returns [B, N*F1], each row a window's flattened node features, using the
/// row-major reshuffles below so every graph application is a single matmul
/// over all windows at once.
inline Var gcn_forward_batch_scalar(Tape& t, Var a_hat, Var x_t, Var w0, Var w1) {
    const std::size_t n = t.shape(a_hat)[0];
    const std::size_t b = t.shape(x_t)[1];
    const std::size_t f0 = t.shape(w0)[1];
    const std::size_t f1 = t.shape(w1)[1];
    Var z = t.matmul(a_hat, x_t);                       // [N, B]
    Var h = t.relu(t.matmul(t.reshape(z, {n * b, 1}), w0));  // [N*B, F0]
    Var g = t.matmul(a_hat, t.reshape(h, {n, b * f0}));      // [N, B*F0]
    Var out = t.matmul(t.reshape(g, {n * b, f0}), w1);       // [N*B, F1]
    Var per_window = t.swap01(t.reshape(out, {n, b, f1}), n, b);  // [B, N, F1]
    return t.reshape(per_window, {b, n * f1});
}

}  // namespace evf
