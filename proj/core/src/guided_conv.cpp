#include "gdc/guided_conv.hpp"

#include <fmt/format.h>
#include <omp.h>

#include <algorithm>

namespace gdc {

namespace {

int effective_threads(std::int64_t work_items) {
    int nt = num_threads() > 0 ? num_threads() : omp_get_max_threads();
    return static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(nt, work_items)));
}

template <typename T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
    if (!current_tape<T>()) return false;
    for (const Tensor<T>* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

}  // namespace

template <typename T>
FullVariantKernels<T> make_full_variant_kernels(int batch, int M, int N, int K, int H, int W,
                                                std::int64_t element_cap) {
    if (batch <= 0 || M <= 0 || N <= 0 || K <= 0 || H <= 0 || W <= 0) {
        throw ValueError("full variant kernels: all dimensions must be positive");
    }
    const std::int64_t elems = FullVariantKernels<T>::element_count(batch, M, N, K, H, W);
    if (elems > element_cap) {
        throw ValueError(fmt::format(
            "full variant kernels: {} elements ({} bytes) exceed the oracle cap of {} elements",
            elems, elems * static_cast<std::int64_t>(sizeof(T)), element_cap));
    }
    FullVariantKernels<T> fk;
    fk.batch = batch;
    fk.M = M;
    fk.N = N;
    fk.K = K;
    fk.H = H;
    fk.W = W;
    fk.weights.assign(static_cast<std::size_t>(elems), T(0));
    return fk;
}

template <typename T>
ChannelwiseKernels<T> generate_channelwise_kernels(const Tensor<T>& image_feat,
                                                   const GuidedConvParams<T>& params) {
    ChannelwiseKernels<T> out;
    out.M = params.M;
    out.K = params.K;
    out.weights = conv2d(image_feat, params.kgl_weight, params.kgl_bias, 1,
                         (params.kgl_weight.shape().h - 1) / 2);
    return out;
}

template <typename T>
CrossChannelKernels<T> generate_crosschannel_kernels(const Tensor<T>& image_feat,
                                                     const GuidedConvParams<T>& params) {
    CrossChannelKernels<T> out;
    out.M = params.M;
    out.N = params.N;
    Tensor<T> pooled = avg_pool_global(image_feat);
    out.weights = fully_connected(pooled, params.fc_weight, params.fc_bias);
    // (batch, M*N, 1, 1) as produced; interpreted as per-image (M, N).
    return out;
}

template <typename T>
Tensor<T> channelwise_variant_conv(const Tensor<T>& depth_feat,
                                   const ChannelwiseKernels<T>& kernels) {
    const Shape4 s = depth_feat.shape();
    const Shape4 ks = kernels.weights.shape();
    const int M = kernels.M;
    const int K = kernels.K;
    if (K % 2 == 0) throw ValueError("channelwise_variant_conv: K must be odd");
    if (s.c != M || ks.c != M * K * K || ks.n != s.n || ks.h != s.h || ks.w != s.w) {
        throw ShapeError(fmt::format(
            "channelwise_variant_conv: depth {} incompatible with kernels {} (M={}, K={})",
            s.str(), ks.str(), M, K));
    }
    const int R = (K - 1) / 2;
    const Tensor<T>& W = kernels.weights;
    Tensor<T> out = Tensor<T>::zeros(s);

    const std::int64_t planes = static_cast<std::int64_t>(s.n) * M;
    const int nt = effective_threads(planes);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t nm = 0; nm < planes; ++nm) {
        const int n = static_cast<int>(nm / M);
        const int m = static_cast<int>(nm % M);
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                T acc = T(0);
                for (int ky = 0; ky < K; ++ky) {
                    const int iy = y + ky - R;
                    if (iy < 0 || iy >= s.h) continue;
                    for (int kx = 0; kx < K; ++kx) {
                        const int ix = x + kx - R;
                        if (ix < 0 || ix >= s.w) continue;
                        acc += W.at(n, m * K * K + ky * K + kx, y, x) * depth_feat.at(n, m, iy, ix);
                    }
                }
                out.at(n, m, y, x) = acc;
            }
        }
    }

    if (recording<T>({&depth_feat, &kernels.weights})) {
        out.set_requires_grad(true);
        Tensor<T> S = depth_feat;
        Tensor<T> Wt = kernels.weights;
        const int Kc = K;
        current_tape<T>()->record([S, Wt, out, M, Kc, R]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 s = S.shape();
            const bool need_s = S.requires_grad();
            const bool need_w = Wt.requires_grad();
            if (need_s) S.ensure_grad();
            if (need_w) Wt.ensure_grad();
            const std::int64_t planes = static_cast<std::int64_t>(s.n) * M;
            const int nt = effective_threads(planes);
            // Each (n, m) plane is owned by one thread; both scatter targets
            // live inside that plane, so writes stay disjoint.
#pragma omp parallel for schedule(static) num_threads(nt)
            for (std::int64_t nm = 0; nm < planes; ++nm) {
                const int n = static_cast<int>(nm / M);
                const int m = static_cast<int>(nm % M);
                for (int y = 0; y < s.h; ++y) {
                    for (int x = 0; x < s.w; ++x) {
                        const T gv = g[out.index(n, m, y, x)];
                        for (int ky = 0; ky < Kc; ++ky) {
                            const int iy = y + ky - R;
                            if (iy < 0 || iy >= s.h) continue;
                            for (int kx = 0; kx < Kc; ++kx) {
                                const int ix = x + kx - R;
                                if (ix < 0 || ix >= s.w) continue;
                                const int kc = m * Kc * Kc + ky * Kc + kx;
                                if (need_s)
                                    S.grad()[S.index(n, m, iy, ix)] +=
                                        gv * Wt.at(n, kc, y, x);
                                if (need_w)
                                    Wt.grad()[Wt.index(n, kc, y, x)] +=
                                        gv * S.at(n, m, iy, ix);
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> crosschannel_conv(const Tensor<T>& depth_feat, const CrossChannelKernels<T>& kernels) {
    const Shape4 s = depth_feat.shape();
    const int M = kernels.M;
    const int N = kernels.N;
    const Shape4 ks = kernels.weights.shape();
    if (s.c != M || ks.c != M * N || ks.n != s.n) {
        throw ShapeError(fmt::format(
            "crosschannel_conv: depth {} incompatible with kernels {} (M={}, N={})", s.str(),
            ks.str(), M, N));
    }
    Tensor<T> out = Tensor<T>::zeros({s.n, N, s.h, s.w});
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    const Tensor<T>& W = kernels.weights;
    const int nt = effective_threads(s.n);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int n = 0; n < s.n; ++n) {
        for (int m = 0; m < M; ++m) {
            const T* src = depth_feat.data() + depth_feat.index(n, m, 0, 0);
            for (int j = 0; j < N; ++j) {
                const T wv = W.at(n, m * N + j, 0, 0);
                T* dst = out.data() + out.index(n, j, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) dst[i] += wv * src[i];
            }
        }
    }

    if (recording<T>({&depth_feat, &kernels.weights})) {
        out.set_requires_grad(true);
        Tensor<T> D = depth_feat;
        Tensor<T> Wt = kernels.weights;
        current_tape<T>()->record([D, Wt, out, M, N]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 s = D.shape();
            const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
            const int nt = effective_threads(s.n);
            const bool need_d = D.requires_grad();
            const bool need_w = Wt.requires_grad();
            if (need_d) D.ensure_grad();
            if (need_w) Wt.ensure_grad();
#pragma omp parallel for schedule(static) num_threads(nt)
            for (int n = 0; n < s.n; ++n) {
                for (int m = 0; m < M; ++m) {
                    const T* src = D.data() + D.index(n, m, 0, 0);
                    T* gd = need_d ? D.grad() + D.index(n, m, 0, 0) : nullptr;
                    for (int j = 0; j < N; ++j) {
                        const T* go = g + out.index(n, j, 0, 0);
                        const T wv = Wt.at(n, m * N + j, 0, 0);
                        T wacc = T(0);
                        for (std::int64_t i = 0; i < plane; ++i) {
                            if (need_d) gd[i] += wv * go[i];
                            wacc += src[i] * go[i];
                        }
                        if (need_w) Wt.grad()[Wt.index(n, m * N + j, 0, 0)] += wacc;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> naive_guided_conv(const Tensor<T>& depth_feat, const FullVariantKernels<T>& kernels) {
    const Shape4 s = depth_feat.shape();
    if (s.n != kernels.batch || s.c != kernels.M || s.h != kernels.H || s.w != kernels.W) {
        throw ShapeError(fmt::format(
            "naive_guided_conv: depth {} incompatible with kernel bank ({}x{}x{}x{}^2x{}x{})",
            s.str(), kernels.batch, kernels.M, kernels.N, kernels.K, kernels.H, kernels.W));
    }
    const std::int64_t elems =
        FullVariantKernels<T>::element_count(kernels.batch, kernels.M, kernels.N, kernels.K,
                                             kernels.H, kernels.W);
    if (elems > FullVariantKernels<T>::kDefaultElementCap) {
        throw ValueError(fmt::format(
            "naive_guided_conv: kernel bank of {} elements needs {} bytes, above the oracle cap",
            elems, elems * static_cast<std::int64_t>(sizeof(T))));
    }
    const int K = kernels.K;
    const int R = (K - 1) / 2;
    Tensor<T> out = Tensor<T>::zeros({s.n, kernels.N, s.h, s.w});
    for (int b = 0; b < s.n; ++b) {
        for (int j = 0; j < kernels.N; ++j) {
            for (int y = 0; y < s.h; ++y) {
                for (int x = 0; x < s.w; ++x) {
                    T acc = T(0);
                    for (int m = 0; m < kernels.M; ++m) {
                        for (int ky = 0; ky < K; ++ky) {
                            const int iy = y + ky - R;
                            if (iy < 0 || iy >= s.h) continue;
                            for (int kx = 0; kx < K; ++kx) {
                                const int ix = x + kx - R;
                                if (ix < 0 || ix >= s.w) continue;
                                acc += kernels.at(b, m, j, ky * K + kx, y, x) *
                                       depth_feat.at(b, m, iy, ix);
                            }
                        }
                    }
                    out.at(b, j, y, x) = acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
FullVariantKernels<T> induced_full_kernels(const ChannelwiseKernels<T>& cw,
                                           const CrossChannelKernels<T>& cc,
                                           std::int64_t element_cap) {
    const Shape4 ks = cw.weights.shape();
    if (cc.M != cw.M || cc.weights.shape().n != ks.n) {
        throw ShapeError("induced_full_kernels: stage shapes disagree");
    }
    FullVariantKernels<T> fk =
        make_full_variant_kernels<T>(ks.n, cw.M, cc.N, cw.K, ks.h, ks.w, element_cap);
    for (int b = 0; b < fk.batch; ++b) {
        for (int m = 0; m < fk.M; ++m) {
            for (int n = 0; n < fk.N; ++n) {
                const T wv = cc.at(b, m, n);
                for (int k = 0; k < fk.K * fk.K; ++k) {
                    for (int y = 0; y < fk.H; ++y) {
                        for (int x = 0; x < fk.W; ++x) {
                            fk.at(b, m, n, k, y, x) = wv * cw.at(b, m, k, y, x);
                        }
                    }
                }
            }
        }
    }
    return fk;
}

template <typename T>
Tensor<T> guided_module_forward(const Tensor<T>& image_feat, const Tensor<T>& depth_feat,
                                const GuidedConvParams<T>& params) {
    const Shape4 is = image_feat.shape();
    const Shape4 ds = depth_feat.shape();
    if (is.h != ds.h || is.w != ds.w || is.n != ds.n) {
        throw ShapeError(fmt::format(
            "guided_module_forward: image feature {} and depth feature {} disagree", is.str(),
            ds.str()));
    }
    ChannelwiseKernels<T> cw = generate_channelwise_kernels(image_feat, params);
    CrossChannelKernels<T> cc = generate_crosschannel_kernels(image_feat, params);
    Tensor<T> mid = channelwise_variant_conv(depth_feat, cw);
    return crosschannel_conv(mid, cc);
}

#define GDC_INSTANTIATE_GUIDED(T)                                                             \
    template FullVariantKernels<T> make_full_variant_kernels(int, int, int, int, int, int,   \
                                                             std::int64_t);                  \
    template ChannelwiseKernels<T> generate_channelwise_kernels(const Tensor<T>&,            \
                                                                const GuidedConvParams<T>&); \
    template CrossChannelKernels<T> generate_crosschannel_kernels(                           \
        const Tensor<T>&, const GuidedConvParams<T>&);                                       \
    template Tensor<T> channelwise_variant_conv(const Tensor<T>&,                            \
                                                const ChannelwiseKernels<T>&);               \
    template Tensor<T> crosschannel_conv(const Tensor<T>&, const CrossChannelKernels<T>&);   \
    template Tensor<T> naive_guided_conv(const Tensor<T>&, const FullVariantKernels<T>&);    \
    template FullVariantKernels<T> induced_full_kernels(const ChannelwiseKernels<T>&,        \
                                                        const CrossChannelKernels<T>&,       \
                                                        std::int64_t);                       \
    template Tensor<T> guided_module_forward(const Tensor<T>&, const Tensor<T>&,             \
                                             const GuidedConvParams<T>&);

GDC_INSTANTIATE_GUIDED(float)
GDC_INSTANTIATE_GUIDED(double)

#undef GDC_INSTANTIATE_GUIDED

}  // namespace gdc
