#include "gdc/ops.hpp"

#include <fmt/format.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

// Determinism contract: every parallel loop below writes a disjoint slice of
// the output, and each output element is produced by one fixed left-to-right
// reduction. Results are therefore bit-identical for any thread count.

namespace gdc {

namespace {

int effective_threads(std::int64_t work_items) {
    int nt = num_threads() > 0 ? num_threads() : omp_get_max_threads();
    return static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(nt, work_items)));
}

// C(m x n) += A(m x k) * B(k x n), all row-major.
template <typename T>
void gemm_nn(int m, int k, int n, const T* A, const T* B, T* C) {
    for (int i = 0; i < m; ++i) {
        const T* a = A + static_cast<std::int64_t>(i) * k;
        T* c = C + static_cast<std::int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = a[p];
            const T* b = B + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C(m x n) += A^T * B with A stored (k x m), B (k x n).
template <typename T>
void gemm_tn(int m, int k, int n, const T* A, const T* B, T* C) {
    for (int p = 0; p < k; ++p) {
        const T* a = A + static_cast<std::int64_t>(p) * m;
        const T* b = B + static_cast<std::int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = a[i];
            T* c = C + static_cast<std::int64_t>(i) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C(m x n) += A * B^T with A (m x k), B stored (n x k).
template <typename T>
void gemm_nt(int m, int k, int n, const T* A, const T* B, T* C) {
    for (int i = 0; i < m; ++i) {
        const T* a = A + static_cast<std::int64_t>(i) * k;
        T* c = C + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* b = B + static_cast<std::int64_t>(j) * k;
            T s = T(0);
            for (int p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] += s;
        }
    }
}

// One batch item (C, H, W) -> column matrix (C*K*K, HO*WO) with zero padding.
template <typename T>
void im2col(const T* x, int C, int H, int W, int K, int stride, int pad, int HO, int WO, T* col) {
    const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                T* dst = col + (((static_cast<std::int64_t>(c) * K + ky) * K) + kx) * S;
                const T* src = x + static_cast<std::int64_t>(c) * H * W;
                for (int oy = 0; oy < HO; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* drow = dst + static_cast<std::int64_t>(oy) * WO;
                    if (iy < 0 || iy >= H) {
                        std::fill(drow, drow + WO, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::int64_t>(iy) * W;
                    for (int ox = 0; ox < WO; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        drow[ox] = (ix >= 0 && ix < W) ? srow[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Pixel-major layout (HO*WO, C*K*K): the weight-gradient GEMM walks kernel
// positions contiguously while keeping each output element's accumulation in
// ascending pixel order.
template <typename T>
void im2col_t(const T* x, int C, int H, int W, int K, int stride, int pad, int HO, int WO,
              T* col) {
    const int R = C * K * K;
    for (int oy = 0; oy < HO; ++oy) {
        for (int ox = 0; ox < WO; ++ox) {
            T* row = col + (static_cast<std::int64_t>(oy) * WO + ox) * R;
            for (int c = 0; c < C; ++c) {
                const T* src = x + static_cast<std::int64_t>(c) * H * W;
                for (int ky = 0; ky < K; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < K; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        *row++ = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                     ? src[static_cast<std::int64_t>(iy) * W + ix]
                                     : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add a column matrix back onto the image plane.
template <typename T>
void col2im_accum(const T* col, int C, int H, int W, int K, int stride, int pad, int HO, int WO,
                  T* x) {
    const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                const T* src = col + (((static_cast<std::int64_t>(c) * K + ky) * K) + kx) * S;
                T* dst = x + static_cast<std::int64_t>(c) * H * W;
                for (int oy = 0; oy < HO; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    const T* srow = src + static_cast<std::int64_t>(oy) * WO;
                    T* drow = dst + static_cast<std::int64_t>(iy) * W;
                    for (int ox = 0; ox < WO; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape().str(),
                                     b.shape().str()));
    }
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
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.numel();
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([a = a, b = b, out]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const std::int64_t n = out.numel();
            if (a.requires_grad()) {
                a.ensure_grad();
                T* ga = a.grad();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                b.ensure_grad();
                T* gb = b.grad();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.numel();
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([a = a, b = b, out]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const std::int64_t n = out.numel();
            if (a.requires_grad()) {
                a.ensure_grad();
                T* ga = a.grad();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                b.ensure_grad();
                T* gb = b.grad();
                for (std::int64_t i = 0; i < n; ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.numel();
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([a = a, b = b, out]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const std::int64_t n = out.numel();
            if (a.requires_grad()) {
                a.ensure_grad();
                T* ga = a.grad();
                const T* pb = b.data();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
            }
            if (b.requires_grad()) {
                b.ensure_grad();
                T* gb = b.grad();
                const T* pa = a.data();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.numel();
    const T* pa = a.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
    if (recording<T>({&a})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([a = a, out, s]() mutable {
            const T* g = out.grad();
            if (!g || !a.requires_grad()) return;
            a.ensure_grad();
            T* ga = a.grad();
            const std::int64_t n = out.numel();
            for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * s;
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const std::int64_t n = x.numel();
    const T* px = x.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, out]() mutable {
            const T* g = out.grad();
            if (!g || !x.requires_grad()) return;
            x.ensure_grad();
            T* gx = x.grad();
            const T* px = x.data();
            const std::int64_t n = out.numel();
            for (std::int64_t i = 0; i < n; ++i) {
                if (px[i] > T(0)) gx[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros({1, 1, 1, 1});
    const std::int64_t n = x.numel();
    const T* px = x.data();
    T s = T(0);
    for (std::int64_t i = 0; i < n; ++i) s += px[i];
    out.data()[0] = s;
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, out]() mutable {
            const T* g = out.grad();
            if (!g || !x.requires_grad()) return;
            x.ensure_grad();
            T* gx = x.grad();
            const T gv = g[0];
            const std::int64_t n = x.numel();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gv;
        });
    }
    return out;
}

template <typename T>
Tensor<T> avg_pool_global(const Tensor<T>& x) {
    const Shape4 s = x.shape();
    Tensor<T> out = Tensor<T>::zeros({s.n, s.c, 1, 1});
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const T* p = x.data() + x.index(n, c, 0, 0);
            T acc = T(0);
            for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc / static_cast<T>(plane);
        }
    }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, out]() mutable {
            const T* g = out.grad();
            if (!g || !x.requires_grad()) return;
            x.ensure_grad();
            const Shape4 s = x.shape();
            const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
            const T inv = T(1) / static_cast<T>(plane);
            for (int n = 0; n < s.n; ++n) {
                for (int c = 0; c < s.c; ++c) {
                    T* gx = x.grad() + x.index(n, c, 0, 0);
                    const T gv = g[static_cast<std::int64_t>(n) * s.c + c] * inv;
                    for (std::int64_t i = 0; i < plane; ++i) gx[i] += gv;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape4 sa = a.shape();
    const Shape4 sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ShapeError(fmt::format("concat_channels: shape mismatch {} vs {}", sa.str(),
                                     sb.str()));
    }
    Tensor<T> out = Tensor<T>::zeros({sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::int64_t plane = static_cast<std::int64_t>(sa.h) * sa.w;
    for (int n = 0; n < sa.n; ++n) {
        std::copy_n(a.data() + a.index(n, 0, 0, 0), sa.c * plane,
                    out.data() + out.index(n, 0, 0, 0));
        std::copy_n(b.data() + b.index(n, 0, 0, 0), sb.c * plane,
                    out.data() + out.index(n, sa.c, 0, 0));
    }
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([a = a, b = b, out]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 sa = a.shape();
            const Shape4 sb = b.shape();
            const std::int64_t plane = static_cast<std::int64_t>(sa.h) * sa.w;
            if (a.requires_grad()) {
                a.ensure_grad();
                for (int n = 0; n < sa.n; ++n) {
                    const T* gs = g + out.index(n, 0, 0, 0);
                    T* ga = a.grad() + a.index(n, 0, 0, 0);
                    for (std::int64_t i = 0; i < sa.c * plane; ++i) ga[i] += gs[i];
                }
            }
            if (b.requires_grad()) {
                b.ensure_grad();
                for (int n = 0; n < sb.n; ++n) {
                    const T* gs = g + out.index(n, sa.c, 0, 0);
                    T* gb = b.grad() + b.index(n, 0, 0, 0);
                    for (std::int64_t i = 0; i < sb.c * plane; ++i) gb[i] += gs[i];
                }
            }
        });
    }
    return out;
}

namespace {

// Shared per-item kernels. conv2d and deconv2d are adjoint views of the same
// three primitives; the deconv path maps onto them with the roles of input
// and output-gradient swapped.

template <typename T>
void conv_fwd_item(const T* x, const T* w, int CI, int H, int W, int CO, int K, int stride,
                   int pad, int HO, int WO, T* out, std::vector<T>& scratch) {
    const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
    scratch.resize(static_cast<std::size_t>(CI) * K * K * S);
    im2col(x, CI, H, W, K, stride, pad, HO, WO, scratch.data());
    gemm_nn(CO, CI * K * K, static_cast<int>(S), w, scratch.data(), out);
}

template <typename T>
void conv_bwdx_item(const T* gy, const T* w, int CI, int H, int W, int CO, int K, int stride,
                    int pad, int HO, int WO, T* gx, std::vector<T>& scratch) {
    const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
    scratch.assign(static_cast<std::size_t>(CI) * K * K * S, T(0));
    gemm_tn(CI * K * K, CO, static_cast<int>(S), w, gy, scratch.data());
    col2im_accum(scratch.data(), CI, H, W, K, stride, pad, HO, WO, gx);
}

template <typename T>
void conv_gw_item(const T* gy, const T* x, int CI, int H, int W, int CO, int K, int stride,
                  int pad, int HO, int WO, T* gw, std::vector<T>& scratch) {
    const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
    scratch.resize(static_cast<std::size_t>(CI) * K * K * S);
    im2col_t(x, CI, H, W, K, stride, pad, HO, WO, scratch.data());
    // gw(CO x CI*K*K) += gy(CO x S) * col_t(S x CI*K*K), ascending pixel order.
    gemm_nn(CO, static_cast<int>(S), CI * K * K, gy, scratch.data(), gw);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
    const Shape4 xs = x.shape();
    const Shape4 ws = weight.shape();
    const int K = ws.h;
    if (ws.w != K || K % 2 == 0) {
        throw ShapeError(fmt::format("conv2d: kernel must be square with odd size, got weight {}",
                                     ws.str()));
    }
    if (xs.c != ws.c) {
        throw ShapeError(fmt::format("conv2d: input {} has {} channels but weight {} expects {}",
                                     xs.str(), xs.c, ws.str(), ws.c));
    }
    if (stride < 1) throw ValueError("conv2d: stride must be positive");
    const int HO = conv_out_size(xs.h, K, stride, padding);
    const int WO = conv_out_size(xs.w, K, stride, padding);
    if (HO < 1 || WO < 1) {
        throw ShapeError(fmt::format("conv2d: input {} too small for weight {} stride {} pad {}",
                                     xs.str(), ws.str(), stride, padding));
    }
    const int CI = xs.c;
    const int CO = ws.n;
    if (bias.defined() && (bias.shape().c != CO || bias.numel() != CO)) {
        throw ShapeError(fmt::format("conv2d: bias {} does not match {} output channels",
                                     bias.shape().str(), CO));
    }

    Tensor<T> out = Tensor<T>::zeros({xs.n, CO, HO, WO});
    const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
    const int nt = effective_threads(xs.n);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int n = 0; n < xs.n; ++n) {
        std::vector<T> scratch;
        conv_fwd_item(x.data() + x.index(n, 0, 0, 0), weight.data(), CI, xs.h, xs.w, CO, K,
                      stride, padding, HO, WO, out.data() + out.index(n, 0, 0, 0), scratch);
        if (bias.defined()) {
            for (int co = 0; co < CO; ++co) {
                T* row = out.data() + out.index(n, co, 0, 0);
                const T bv = bias.data()[co];
                for (std::int64_t i = 0; i < S; ++i) row[i] += bv;
            }
        }
    }

    if (recording<T>({&x, &weight, &bias})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, weight = weight, bias = bias, out, stride, padding]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 xs = x.shape();
            const Shape4 ws = weight.shape();
            const Shape4 os = out.shape();
            const int K = ws.h, CI = xs.c, CO = ws.n, HO = os.h, WO = os.w;
            const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
            const int nt = effective_threads(xs.n);
            if (x.requires_grad()) {
                x.ensure_grad();
#pragma omp parallel for schedule(static) num_threads(nt)
                for (int n = 0; n < xs.n; ++n) {
                    std::vector<T> scratch;
                    conv_bwdx_item(g + out.index(n, 0, 0, 0), weight.data(), CI, xs.h, xs.w, CO,
                                   K, stride, padding, HO, WO, x.grad() + x.index(n, 0, 0, 0),
                                   scratch);
                }
            }
            if (weight.requires_grad()) {
                weight.ensure_grad();
                // Per-item partials summed in batch order: bit-deterministic
                // for any thread count.
                const std::size_t wn = static_cast<std::size_t>(weight.numel());
                std::vector<T> partials(static_cast<std::size_t>(xs.n) * wn, T(0));
#pragma omp parallel for schedule(static) num_threads(nt)
                for (int n = 0; n < xs.n; ++n) {
                    std::vector<T> scratch;
                    conv_gw_item(g + out.index(n, 0, 0, 0), x.data() + x.index(n, 0, 0, 0), CI,
                                 xs.h, xs.w, CO, K, stride, padding, HO, WO,
                                 partials.data() + static_cast<std::size_t>(n) * wn, scratch);
                }
                T* gw = weight.grad();
                for (int n = 0; n < xs.n; ++n) {
                    const T* p = partials.data() + static_cast<std::size_t>(n) * wn;
                    for (std::size_t i = 0; i < wn; ++i) gw[i] += p[i];
                }
            }
            if (bias.defined() && bias.requires_grad()) {
                bias.ensure_grad();
                T* gb = bias.grad();
                for (int n = 0; n < xs.n; ++n) {
                    for (int co = 0; co < CO; ++co) {
                        const T* row = g + out.index(n, co, 0, 0);
                        T acc = T(0);
                        for (std::int64_t i = 0; i < S; ++i) acc += row[i];
                        gb[co] += acc;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                   int padding) {
    const Shape4 xs = x.shape();
    const Shape4 ws = weight.shape();
    const int K = ws.h;
    if (ws.w != K) {
        throw ShapeError(fmt::format("deconv2d: kernel must be square, got weight {}", ws.str()));
    }
    if (xs.c != ws.n) {
        throw ShapeError(fmt::format("deconv2d: input {} has {} channels but weight {} expects {}",
                                     xs.str(), xs.c, ws.str(), ws.n));
    }
    if (stride < 1) throw ValueError("deconv2d: stride must be >= 1");
    const int HO = deconv_out_size(xs.h, K, stride, padding);
    const int WO = deconv_out_size(xs.w, K, stride, padding);
    if (HO < 1 || WO < 1) {
        throw ShapeError(fmt::format("deconv2d: input {} too small for weight {} stride {} pad {}",
                                     xs.str(), ws.str(), stride, padding));
    }
    const int CI = xs.c;   // small-side channels
    const int CO = ws.c;   // big-side channels
    if (bias.defined() && bias.numel() != CO) {
        throw ShapeError(fmt::format("deconv2d: bias {} does not match {} output channels",
                                     bias.shape().str(), CO));
    }

    // The associated conv maps the (big) output back to the (small) input
    // with the same weight buffer, so forward here is conv_bwdx and vice
    // versa.
    Tensor<T> out = Tensor<T>::zeros({xs.n, CO, HO, WO});
    const int nt = effective_threads(xs.n);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int n = 0; n < xs.n; ++n) {
        std::vector<T> scratch;
        conv_bwdx_item(x.data() + x.index(n, 0, 0, 0), weight.data(), CO, HO, WO, CI, K, stride,
                       padding, xs.h, xs.w, out.data() + out.index(n, 0, 0, 0), scratch);
        if (bias.defined()) {
            const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
            for (int co = 0; co < CO; ++co) {
                T* row = out.data() + out.index(n, co, 0, 0);
                const T bv = bias.data()[co];
                for (std::int64_t i = 0; i < S; ++i) row[i] += bv;
            }
        }
    }

    if (recording<T>({&x, &weight, &bias})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, weight = weight, bias = bias, out, stride, padding]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 xs = x.shape();
            const Shape4 ws = weight.shape();
            const Shape4 os = out.shape();
            const int K = ws.h, CI = xs.c, CO = ws.c, HO = os.h, WO = os.w;
            const int nt = effective_threads(xs.n);
            if (x.requires_grad()) {
                x.ensure_grad();
#pragma omp parallel for schedule(static) num_threads(nt)
                for (int n = 0; n < xs.n; ++n) {
                    std::vector<T> scratch;
                    conv_fwd_item(g + out.index(n, 0, 0, 0), weight.data(), CO, HO, WO, CI, K,
                                  stride, padding, xs.h, xs.w, x.grad() + x.index(n, 0, 0, 0),
                                  scratch);
                }
            }
            if (weight.requires_grad()) {
                weight.ensure_grad();
                const std::size_t wn = static_cast<std::size_t>(weight.numel());
                std::vector<T> partials(static_cast<std::size_t>(xs.n) * wn, T(0));
#pragma omp parallel for schedule(static) num_threads(nt)
                for (int n = 0; n < xs.n; ++n) {
                    std::vector<T> scratch;
                    conv_gw_item(x.data() + x.index(n, 0, 0, 0), g + out.index(n, 0, 0, 0), CO,
                                 HO, WO, CI, K, stride, padding, xs.h, xs.w,
                                 partials.data() + static_cast<std::size_t>(n) * wn, scratch);
                }
                T* gw = weight.grad();
                for (int n = 0; n < xs.n; ++n) {
                    const T* p = partials.data() + static_cast<std::size_t>(n) * wn;
                    for (std::size_t i = 0; i < wn; ++i) gw[i] += p[i];
                }
            }
            if (bias.defined() && bias.requires_grad()) {
                bias.ensure_grad();
                T* gb = bias.grad();
                const std::int64_t S = static_cast<std::int64_t>(HO) * WO;
                for (int n = 0; n < xs.n; ++n) {
                    for (int co = 0; co < CO; ++co) {
                        const T* row = g + out.index(n, co, 0, 0);
                        T acc = T(0);
                        for (std::int64_t i = 0; i < S; ++i) acc += row[i];
                        gb[co] += acc;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Shape4 xs = x.shape();
    const Shape4 ws = weight.shape();
    const int in = xs.c * xs.h * xs.w;
    const int out_features = ws.n;
    if (ws.c != in || ws.h != 1 || ws.w != 1) {
        throw ShapeError(fmt::format(
            "fully_connected: weight {} does not match flattened input size {} from {}", ws.str(),
            in, xs.str()));
    }
    if (bias.defined() && bias.numel() != out_features) {
        throw ShapeError(fmt::format("fully_connected: bias {} does not match {} outputs",
                                     bias.shape().str(), out_features));
    }
    Tensor<T> out = Tensor<T>::zeros({xs.n, out_features, 1, 1});
    gemm_nt(xs.n, in, out_features, x.data(), weight.data(), out.data());
    if (bias.defined()) {
        for (int n = 0; n < xs.n; ++n) {
            T* row = out.data() + static_cast<std::int64_t>(n) * out_features;
            for (int j = 0; j < out_features; ++j) row[j] += bias.data()[j];
        }
    }
    if (recording<T>({&x, &weight, &bias})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, weight = weight, bias = bias, out]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 xs = x.shape();
            const int in = xs.c * xs.h * xs.w;
            const int out_features = weight.shape().n;
            if (x.requires_grad()) {
                x.ensure_grad();
                gemm_nn(xs.n, out_features, in, g, weight.data(), x.grad());
            }
            if (weight.requires_grad()) {
                weight.ensure_grad();
                gemm_tn(out_features, xs.n, in, g, x.data(), weight.grad());
            }
            if (bias.defined() && bias.requires_grad()) {
                bias.ensure_grad();
                T* gb = bias.grad();
                for (int n = 0; n < xs.n; ++n) {
                    const T* row = g + static_cast<std::int64_t>(n) * out_features;
                    for (int j = 0; j < out_features; ++j) gb[j] += row[j];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                     T eps) {
    const Shape4 xs = x.shape();
    const int C = xs.c;
    if (gamma.numel() != C || beta.numel() != C) {
        throw ShapeError(fmt::format("batch_norm: gamma {} / beta {} do not match {} channels",
                                     gamma.shape().str(), beta.shape().str(), C));
    }
    if (running_mean.numel() != C || running_var.numel() != C) {
        throw ShapeError("batch_norm: running stats do not match channel count");
    }
    const std::int64_t count = static_cast<std::int64_t>(xs.n) * xs.h * xs.w;
    if (count == 0) throw ValueError("batch_norm: empty batch*spatial extent");

    Tensor<T> out = Tensor<T>::zeros(xs);
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;

    // Per-channel normalization statistics used by forward; saved for backward.
    std::vector<T> mean(C), invstd(C);
    const int nt = effective_threads(C);
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int c = 0; c < C; ++c) {
        T m, is;
        if (training) {
            T acc = T(0);
            for (int n = 0; n < xs.n; ++n) {
                const T* p = x.data() + x.index(n, c, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
            }
            m = acc / static_cast<T>(count);
            T vacc = T(0);
            for (int n = 0; n < xs.n; ++n) {
                const T* p = x.data() + x.index(n, c, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T d = p[i] - m;
                    vacc += d * d;
                }
            }
            const T var = vacc / static_cast<T>(count);
            is = T(1) / std::sqrt(var + eps);
            running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * m;
            running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * var;
        } else {
            m = running_mean.data()[c];
            is = T(1) / std::sqrt(running_var.data()[c] + eps);
        }
        mean[c] = m;
        invstd[c] = is;
        const T gm = gamma.data()[c];
        const T bt = beta.data()[c];
        for (int n = 0; n < xs.n; ++n) {
            const T* p = x.data() + x.index(n, c, 0, 0);
            T* o = out.data() + out.index(n, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) o[i] = gm * (p[i] - m) * is + bt;
        }
    }

    if (recording<T>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        current_tape<T>()->record([x = x, gamma = gamma, beta = beta, out, mean, invstd, training]() mutable {
            const T* g = out.grad();
            if (!g) return;
            const Shape4 xs = x.shape();
            const int C = xs.c;
            const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
            const std::int64_t count = static_cast<std::int64_t>(xs.n) * plane;
            const bool need_x = x.requires_grad();
            const bool need_g = gamma.requires_grad();
            const bool need_b = beta.requires_grad();
            if (need_x) x.ensure_grad();
            if (need_g) gamma.ensure_grad();
            if (need_b) beta.ensure_grad();
            const int nt = effective_threads(C);
#pragma omp parallel for schedule(static) num_threads(nt)
            for (int c = 0; c < C; ++c) {
                const T m = mean[c];
                const T is = invstd[c];
                const T gm = gamma.data()[c];
                T sum_g = T(0), sum_gx = T(0);
                for (int n = 0; n < xs.n; ++n) {
                    const T* gp = g + out.index(n, c, 0, 0);
                    const T* xp = x.data() + x.index(n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) {
                        sum_g += gp[i];
                        sum_gx += gp[i] * (xp[i] - m) * is;
                    }
                }
                if (need_g) gamma.grad()[c] += sum_gx;
                if (need_b) beta.grad()[c] += sum_g;
                if (need_x) {
                    if (training) {
                        const T mg = sum_g / static_cast<T>(count);
                        const T mgx = sum_gx / static_cast<T>(count);
                        for (int n = 0; n < xs.n; ++n) {
                            const T* gp = g + out.index(n, c, 0, 0);
                            const T* xp = x.data() + x.index(n, c, 0, 0);
                            T* gxp = x.grad() + x.index(n, c, 0, 0);
                            for (std::int64_t i = 0; i < plane; ++i) {
                                const T xhat = (xp[i] - m) * is;
                                gxp[i] += gm * is * (gp[i] - mg - xhat * mgx);
                            }
                        }
                    } else {
                        for (int n = 0; n < xs.n; ++n) {
                            const T* gp = g + out.index(n, c, 0, 0);
                            T* gxp = x.grad() + x.index(n, c, 0, 0);
                            for (std::int64_t i = 0; i < plane; ++i) gxp[i] += gm * is * gp[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

#define GDC_INSTANTIATE_OPS(T)                                                                \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> scale(const Tensor<T>&, T);                                           \
    template Tensor<T> relu(const Tensor<T>&);                                               \
    template Tensor<T> sum_all(const Tensor<T>&);                                            \
    template Tensor<T> avg_pool_global(const Tensor<T>&);                                    \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,     \
                              int);                                                          \
    template Tensor<T> deconv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,   \
                                int);                                                        \
    template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);\
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                  Tensor<T>&, Tensor<T>&, bool, T, T);

GDC_INSTANTIATE_OPS(float)
GDC_INSTANTIATE_OPS(double)

#undef GDC_INSTANTIATE_OPS

}  // namespace gdc
