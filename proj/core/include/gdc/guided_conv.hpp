#pragma once

#include <cstdint>
#include <vector>

#include "gdc/ops.hpp"
#include "gdc/tensor.hpp"

namespace gdc {

// Per-pixel, per-channel K x K kernels: the spatially-variant stage. Laid out
// as a (batch, M*K*K, H, W) tensor; entry (m, k) of pixel p lives at channel
// m*K*K + k with k = ky*K + kx. Produced by a differentiable generator, so
// gradients flow back into the generating parameters.
template <typename T>
struct ChannelwiseKernels {
    Tensor<T> weights;
    int M = 0;
    int K = 0;

    T at(int n, int m, int k, int y, int x) const {
        return weights.at(n, m * K * K + k, y, x);
    }
};

// Per-image M x N mixing matrices: the spatially-invariant stage, shared by
// all pixels of one image. Laid out as a (batch, M*N, 1, 1) tensor with entry
// (m, n) at channel m*N + n.
template <typename T>
struct CrossChannelKernels {
    Tensor<T> weights;
    int M = 0;
    int N = 0;

    T at(int b, int m, int n) const { return weights.at(b, m * N + n, 0, 0); }
};

// Unfactorized spatially-variant kernel bank (batch, M, N, K*K, H, W). Only
// instantiable at oracle scale; the element cap keeps the deliberately
// inefficient baseline runnable.
template <typename T>
struct FullVariantKernels {
    static constexpr std::int64_t kDefaultElementCap = std::int64_t(1) << 26;

    int batch = 0, M = 0, N = 0, K = 0, H = 0, W = 0;
    std::vector<T> weights;  // index (((((b*M + m)*N + n)*K*K + k)*H + y)*W + x)

    static std::int64_t element_count(int batch, int M, int N, int K, int H, int W) {
        return std::int64_t(batch) * M * N * K * K * H * W;
    }
    std::int64_t index(int b, int m, int n, int k, int y, int x) const {
        return ((((std::int64_t(b) * M + m) * N + n) * K * K + k) * H + y) * W + x;
    }
    T& at(int b, int m, int n, int k, int y, int x) {
        return weights[static_cast<std::size_t>(index(b, m, n, k, y, x))];
    }
    T at(int b, int m, int n, int k, int y, int x) const {
        return weights[static_cast<std::size_t>(index(b, m, n, k, y, x))];
    }
};

// Throws ValueError with the byte requirement when the cap is exceeded.
template <typename T>
FullVariantKernels<T> make_full_variant_kernels(
    int batch, int M, int N, int K, int H, int W,
    std::int64_t element_cap = FullVariantKernels<T>::kDefaultElementCap);

// Generating parameters for one guided convolution module: a standard
// convolution emitting the channel-wise kernels and a pooling +
// fully-connected path emitting the cross-channel matrix.
template <typename T>
struct GuidedConvParams {
    int M = 0;  // depth-feature channels in
    int N = 0;  // depth-feature channels out
    int K = 3;  // spatially-variant kernel size

    Tensor<T> kgl_weight;  // (M*K*K, C_image, Kg, Kg)
    Tensor<T> kgl_bias;    // (1, M*K*K, 1, 1)
    Tensor<T> fc_weight;   // (M*N, C_image, 1, 1)
    Tensor<T> fc_bias;     // (1, M*N, 1, 1)
};

template <typename T>
ChannelwiseKernels<T> generate_channelwise_kernels(const Tensor<T>& image_feat,
                                                   const GuidedConvParams<T>& params);

// Exactly avg_pool_global followed by fully_connected, reshaped to (batch, M, N).
template <typename T>
CrossChannelKernels<T> generate_crosschannel_kernels(const Tensor<T>& image_feat,
                                                     const GuidedConvParams<T>& params);

// out[p, m] = sum_k kernels[p, k, m] * depth_feat[p + k, m], zero padding
// (K-1)/2 so output spatial size equals input. Differentiable w.r.t. both
// the features and the kernels.
template <typename T>
Tensor<T> channelwise_variant_conv(const Tensor<T>& depth_feat,
                                   const ChannelwiseKernels<T>& kernels);

// out[p, n] = sum_m kernels[m, n] * depth_feat[p, m], a per-pixel 1x1 mix by
// the per-image matrix. Differentiable w.r.t. both arguments.
template <typename T>
Tensor<T> crosschannel_conv(const Tensor<T>& depth_feat, const CrossChannelKernels<T>& kernels);

// Exact unfactorized spatially-variant convolution; forward only.
template <typename T>
Tensor<T> naive_guided_conv(const Tensor<T>& depth_feat, const FullVariantKernels<T>& kernels);

// The factorization's defining identity lifts the two stages into one full
// kernel bank: W[p, k, m, n] = cross[m, n] * channelwise[p, k, m].
template <typename T>
FullVariantKernels<T> induced_full_kernels(
    const ChannelwiseKernels<T>& cw, const CrossChannelKernels<T>& cc,
    std::int64_t element_cap = FullVariantKernels<T>::kDefaultElementCap);

// Generate-then-apply composition of both stages; end-to-end differentiable
// into the image feature, the depth feature, and both parameter sets.
template <typename T>
Tensor<T> guided_module_forward(const Tensor<T>& image_feat, const Tensor<T>& depth_feat,
                                const GuidedConvParams<T>& params);

}  // namespace gdc
