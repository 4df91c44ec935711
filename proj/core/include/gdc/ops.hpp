#pragma once

#include "gdc/autograd.hpp"
#include "gdc/tensor.hpp"

namespace gdc {

// Standard convolution arithmetic.
inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}
inline int deconv_out_size(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
}

// Elementwise and reduction ops. All participate in the gradient tape when a
// tape is active and any input requires grad.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);

// Per-channel spatial mean; output is (N, C, 1, 1).
template <typename T> Tensor<T> avg_pool_global(const Tensor<T>& x);

template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// weight: (C_out, C_in, K, K), K odd; bias: (1, C_out, 1, 1) or default-constructed.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

// Transposed convolution. weight: (C_in, C_out, K, K) where C_in matches x.
// With the first two weight dimensions read swapped, deconv2d is the exact
// adjoint of conv2d for the same stride/padding: <conv(x,w), y> == <x, deconv(y,w)>.
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                   int stride, int padding);

// x flattened per batch entry to C*H*W features. weight: (out, in, 1, 1),
// bias: (1, out, 1, 1) or default-constructed. Output (N, out, 1, 1).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Plain single-device batch normalization. gamma/beta: (1, C, 1, 1).
// running_mean/running_var are persistent state (1, C, 1, 1), updated by
// exponential moving average in training mode and read in eval mode.
// Variance is the biased (1/count) estimate throughout.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5));

}  // namespace gdc
