#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

namespace detail {

/// Dot product of two rows with a fixed 8-way striped summation tree; the
/// stripes break the FP dependency chain without changing the result across
/// runs (the reduction order is part of the function's definition).
template <typename T>
T striped_dot(const T* a, const T* b, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) acc[i & 7] += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
void axpy(T* __restrict__ y, const T* __restrict__ x, T a, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void axpy4(T* __restrict__ y0, T* __restrict__ y1, T* __restrict__ y2, T* __restrict__ y3,
           const T* __restrict__ x, T a0, T a1, T a2, T a3, int n) {
    for (int i = 0; i < n; ++i) {
        const T xi = x[i];
        y0[i] += a0 * xi;
        y1[i] += a1 * xi;
        y2[i] += a2 * xi;
        y3[i] += a3 * xi;
    }
}

/// out (O x P) += weights (O x K) * cols (K x P), tiled over P so the four
/// active output rows stay cache-resident.
template <typename T>
void gemm_acc(const T* weights, const T* cols, T* out, int O, int K, int P) {
    constexpr int kTile = 1024;
    for (int p0 = 0; p0 < P; p0 += kTile) {
        const int pw = std::min(kTile, P - p0);
        int o = 0;
        for (; o + 4 <= O; o += 4) {
            T* y0 = out + static_cast<std::size_t>(o + 0) * P + p0;
            T* y1 = out + static_cast<std::size_t>(o + 1) * P + p0;
            T* y2 = out + static_cast<std::size_t>(o + 2) * P + p0;
            T* y3 = out + static_cast<std::size_t>(o + 3) * P + p0;
            for (int k = 0; k < K; ++k) {
                const T* x = cols + static_cast<std::size_t>(k) * P + p0;
                axpy4(y0, y1, y2, y3, x, weights[static_cast<std::size_t>(o + 0) * K + k],
                      weights[static_cast<std::size_t>(o + 1) * K + k],
                      weights[static_cast<std::size_t>(o + 2) * K + k],
                      weights[static_cast<std::size_t>(o + 3) * K + k], pw);
            }
        }
        for (; o < O; ++o) {
            T* y = out + static_cast<std::size_t>(o) * P + p0;
            for (int k = 0; k < K; ++k)
                axpy(y, cols + static_cast<std::size_t>(k) * P + p0, weights[static_cast<std::size_t>(o) * K + k],
                     pw);
        }
    }
}

/// Scratch slabs reused across conv calls on the same thread; workers spawned
/// inside an op only ever read them or write disjoint regions.
template <typename T>
std::vector<T>& conv_arena(int which) {
    static thread_local std::vector<T> arenas[2];
    return arenas[which];
}

template <typename T>
T striped_dot_strided(const T* a, const T* b, int n, int stride_b) {
    T acc[4] = {T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 4 <= n; i += 4)
        for (int l = 0; l < 4; ++l) acc[l] += a[i + l] * b[(i + l) * stride_b];
    for (; i < n; ++i) acc[i & 3] += a[i] * b[i * stride_b];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

template <typename T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
    if (a->shape() != b->shape())
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a->shape()) + " vs " +
                                shape_str(b->shape()));
}

template <typename T>
void require_nchw(const TensorPtr<T>& t, const char* op) {
    if (t->rank() != 4)
        throw ContractViolation(std::string(op) + ": expected NCHW tensor, got shape " + shape_str(t->shape()));
}

template <typename T>
bool any_grad(const std::initializer_list<TensorPtr<T>>& ts) {
    for (const auto& t : ts)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "add");
    auto out = Tensor<T>::zeros(a->shape(), detail::any_grad<T>({a, b}));
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->data()[i] = a->data()[i] + b->data()[i];
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({a, b}, [a, b, o] {
            const auto& g = o->grad();
            if (a->requires_grad()) {
                auto& ga = a->grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b->requires_grad()) {
                auto& gb = b->grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "sub");
    auto out = Tensor<T>::zeros(a->shape(), detail::any_grad<T>({a, b}));
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->data()[i] = a->data()[i] - b->data()[i];
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({a, b}, [a, b, o] {
            const auto& g = o->grad();
            if (a->requires_grad()) {
                auto& ga = a->grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b->requires_grad()) {
                auto& gb = b->grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

/// Hadamard product.
template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "mul");
    auto out = Tensor<T>::zeros(a->shape(), detail::any_grad<T>({a, b}));
    const std::size_t n = a->numel();
    for (std::size_t i = 0; i < n; ++i) out->data()[i] = a->data()[i] * b->data()[i];
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({a, b}, [a, b, o] {
            const auto& g = o->grad();
            if (a->requires_grad()) {
                auto& ga = a->grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b->data()[i];
            }
            if (b->requires_grad()) {
                auto& gb = b->grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a->data()[i];
            }
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& x, double s) {
    auto out = Tensor<T>::zeros(x->shape(), x->requires_grad());
    const T sv = static_cast<T>(s);
    for (std::size_t i = 0; i < x->numel(); ++i) out->data()[i] = x->data()[i] * sv;
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, sv, o] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> add_scalar(const TensorPtr<T>& x, double s) {
    auto out = Tensor<T>::zeros(x->shape(), x->requires_grad());
    const T sv = static_cast<T>(s);
    for (std::size_t i = 0; i < x->numel(); ++i) out->data()[i] = x->data()[i] + sv;
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, o] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> square(const TensorPtr<T>& x) {
    auto out = Tensor<T>::zeros(x->shape(), x->requires_grad());
    for (std::size_t i = 0; i < x->numel(); ++i) out->data()[i] = x->data()[i] * x->data()[i];
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, o] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += T(2) * g[i] * x->data()[i];
        });
    }
    return out;
}

/// |x| elementwise; subgradient at 0 is 0.
template <typename T>
TensorPtr<T> abs_t(const TensorPtr<T>& x) {
    auto out = Tensor<T>::zeros(x->shape(), x->requires_grad());
    for (std::size_t i = 0; i < x->numel(); ++i) out->data()[i] = std::abs(x->data()[i]);
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, o] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T v = x->data()[i];
                gx[i] += v > T(0) ? g[i] : (v < T(0) ? -g[i] : T(0));
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activations

/// max(x, slope*x); the subgradient at exactly 0 is `slope`.
template <typename T>
TensorPtr<T> leaky_relu(const TensorPtr<T>& x, double slope) {
    if (slope < 0.0 || slope >= 1.0)
        throw ContractViolation("leaky_relu: slope must be in [0,1), got " + std::to_string(slope));
    auto out = Tensor<T>::zeros(x->shape(), x->requires_grad());
    const T s = static_cast<T>(slope);
    for (std::size_t i = 0; i < x->numel(); ++i) {
        const T v = x->data()[i];
        out->data()[i] = v > T(0) ? v : s * v;
    }
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, s, o] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x->data()[i] > T(0) ? g[i] : s * g[i];
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
    auto out = Tensor<T>::zeros(x->shape(), x->requires_grad());
    for (std::size_t i = 0; i < x->numel(); ++i)
        out->data()[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x->data()[i]))));
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, o] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T y = o->data()[i];
                gx[i] += g[i] * y * (T(1) - y);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions (64-bit accumulation)

template <typename T>
TensorPtr<T> sum_all(const TensorPtr<T>& x) {
    double acc = 0.0;
    for (T v : x->data()) acc += static_cast<double>(v);
    auto out = Tensor<T>::from_data({1}, {static_cast<T>(acc)}, x->requires_grad());
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, o] {
            const T g = o->grad()[0];
            auto& gx = x->grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

template <typename T>
TensorPtr<T> mean_all(const TensorPtr<T>& x) {
    if (x->numel() == 0) throw ContractViolation("mean_all: empty tensor");
    double acc = 0.0;
    for (T v : x->data()) acc += static_cast<double>(v);
    const double inv_n = 1.0 / static_cast<double>(x->numel());
    auto out = Tensor<T>::from_data({1}, {static_cast<T>(acc * inv_n)}, x->requires_grad());
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, inv_n, o] {
            const T g = static_cast<T>(static_cast<double>(o->grad()[0]) * inv_n);
            auto& gx = x->grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structure ops

/// Concatenate along the channel axis of NCHW tensors.
template <typename T>
TensorPtr<T> concat_channels(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_nchw(a, "concat_channels");
    detail::require_nchw(b, "concat_channels");
    const auto& sa = a->shape();
    const auto& sb = b->shape();
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw ContractViolation("concat_channels: incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
    const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    auto out = Tensor<T>::zeros({N, Ca + Cb, H, W}, detail::any_grad<T>({a, b}));
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->data().begin() + static_cast<std::ptrdiff_t>(n * Ca * plane), Ca * plane,
                    out->data().begin() + static_cast<std::ptrdiff_t>(n * (Ca + Cb) * plane));
        std::copy_n(b->data().begin() + static_cast<std::ptrdiff_t>(n * Cb * plane), Cb * plane,
                    out->data().begin() + static_cast<std::ptrdiff_t>((n * (Ca + Cb) + Ca) * plane));
    }
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({a, b}, [a, b, o, N, Ca, Cb, plane] {
            const auto& g = o->grad();
            if (a->requires_grad()) {
                auto& ga = a->grad();
                for (int n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * plane; ++i)
                        ga[n * Ca * plane + i] += g[n * (Ca + Cb) * plane + i];
            }
            if (b->requires_grad()) {
                auto& gb = b->grad();
                for (int n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * plane; ++i)
                        gb[n * Cb * plane + i] += g[(n * (Ca + Cb) + Ca) * plane + i];
            }
        });
    }
    return out;
}

/// Multiply NCHW features by an N1HW coefficient map, broadcast over channels.
template <typename T>
TensorPtr<T> mul_channel_broadcast(const TensorPtr<T>& x, const TensorPtr<T>& m) {
    detail::require_nchw(x, "mul_channel_broadcast");
    detail::require_nchw(m, "mul_channel_broadcast");
    const auto& sx = x->shape();
    const auto& sm = m->shape();
    if (sm[1] != 1 || sm[0] != sx[0] || sm[2] != sx[2] || sm[3] != sx[3])
        throw ContractViolation("mul_channel_broadcast: coefficient shape " + shape_str(sm) +
                                " incompatible with " + shape_str(sx));
    const int N = sx[0], C = sx[1];
    const std::size_t plane = static_cast<std::size_t>(sx[2]) * sx[3];
    auto out = Tensor<T>::zeros(sx, detail::any_grad<T>({x, m}));
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* xp = x->data().data() + (n * C + c) * plane;
            const T* mp = m->data().data() + n * plane;
            T* op = out->data().data() + (n * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] = xp[i] * mp[i];
        }
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x, m}, [x, m, o, N, C, plane] {
            const auto& g = o->grad();
            if (x->requires_grad()) {
                auto& gx = x->grad();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        const T* mp = m->data().data() + n * plane;
                        for (std::size_t i = 0; i < plane; ++i)
                            gx[(n * C + c) * plane + i] += g[(n * C + c) * plane + i] * mp[i];
                    }
            }
            if (m->requires_grad()) {
                auto& gm = m->grad();
                for (int n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < plane; ++i) {
                        double acc = 0.0;
                        for (int c = 0; c < C; ++c)
                            acc += static_cast<double>(g[(n * C + c) * plane + i]) *
                                   static_cast<double>(x->data()[(n * C + c) * plane + i]);
                        gm[n * plane + i] += static_cast<T>(acc);
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution

/// 2-D cross-correlation of an NCHW input with an OIKK kernel.
/// Output spatial extent: floor((H + 2*padding - K)/stride) + 1.
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& input, const TensorPtr<T>& kernel, int stride, int padding) {
    detail::require_nchw(input, "conv2d");
    if (kernel->rank() != 4)
        throw ContractViolation("conv2d: kernel must be OIKK, got shape " + shape_str(kernel->shape()));
    if (stride < 1) throw ContractViolation("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw ContractViolation("conv2d: padding must be >= 0, got " + std::to_string(padding));
    const auto& is = input->shape();
    const auto& ks = kernel->shape();
    const int N = is[0], C = is[1], H = is[2], W = is[3];
    const int O = ks[0], KI = ks[1], KH = ks[2], KW = ks[3];
    if (KI != C)
        throw ContractViolation("conv2d: input has " + std::to_string(C) + " channels but kernel expects " +
                                std::to_string(KI));
    const int OH = (H + 2 * padding - KH) / stride + 1;
    const int OW = (W + 2 * padding - KW) / stride + 1;
    if (H + 2 * padding < KH || W + 2 * padding < KW || OH < 1 || OW < 1)
        throw ContractViolation("conv2d: input " + shape_str(is) + " too small for kernel " + shape_str(ks) +
                                " stride " + std::to_string(stride) + " pad " + std::to_string(padding));

    auto out = Tensor<T>::zeros({N, O, OH, OW}, detail::any_grad<T>({input, kernel}));

    const T* in = input->data().data();
    const T* kw_ = kernel->data().data();
    T* op = out->data().data();
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;

    // One (n,o) plane per task; each output element is owned by one worker,
    // so results are identical for any thread count.
    parallel_for(static_cast<std::size_t>(N) * O, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            const int n = static_cast<int>(t) / O;
            const int o = static_cast<int>(t) % O;
            T* out_base = op + t * out_plane;
            for (int c = 0; c < C; ++c) {
                const T* in_base = in + (static_cast<std::size_t>(n) * C + c) * in_plane;
                for (int kh = 0; kh < KH; ++kh)
                    for (int kwi = 0; kwi < KW; ++kwi) {
                        const T wv = kw_[((static_cast<std::size_t>(o) * C + c) * KH + kh) * KW + kwi];
                        if (wv == T(0)) continue;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= H) continue;
                            // clip ow so iw = ow*stride - padding + kwi stays in [0, W)
                            int ow_lo = 0, ow_hi = OW;
                            while (ow_lo < OW && ow_lo * stride - padding + kwi < 0) ++ow_lo;
                            while (ow_hi > ow_lo && (ow_hi - 1) * stride - padding + kwi >= W) --ow_hi;
                            if (ow_lo >= ow_hi) continue;
                            const T* in_row =
                                in_base + static_cast<std::size_t>(ih) * W + (ow_lo * stride - padding + kwi);
                            T* out_row = out_base + static_cast<std::size_t>(oh) * OW + ow_lo;
                            const int span = ow_hi - ow_lo;
                            if (stride == 1) {
                                detail::axpy(out_row, in_row, wv, span);
                            } else {
                                detail::axpy_strided(out_row, in_row, wv, span, 1, stride);
                            }
                        }
                    }
            }
        }
    });

    if (out->requires_grad()) {
        Tensor<T>* o_node = out.get();
        const int s = stride, p = padding;
        out->set_history({input, kernel}, [input, kernel, o_node, N, C, H, W, O, KH, KW, OH, OW, s, p, in_plane,
                                           out_plane] {
            const T* g = o_node->grad().data();
            const T* in = input->data().data();
            const T* kw_ = kernel->data().data();
            if (input->requires_grad()) {
                T* gin = input->grad().data();
                parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
                    for (std::size_t t = b; t < e; ++t) {
                        const int n = static_cast<int>(t) / C;
                        const int c = static_cast<int>(t) % C;
                        T* gin_base = gin + t * in_plane;
                        for (int o = 0; o < O; ++o) {
                            const T* g_base = g + (static_cast<std::size_t>(n) * O + o) * out_plane;
                            for (int kh = 0; kh < KH; ++kh)
                                for (int kwi = 0; kwi < KW; ++kwi) {
                                    const T wv = kw_[((static_cast<std::size_t>(o) * C + c) * KH + kh) * KW + kwi];
                                    if (wv == T(0)) continue;
                                    for (int oh = 0; oh < OH; ++oh) {
                                        const int ih = oh * s - p + kh;
                                        if (ih < 0 || ih >= H) continue;
                                        int ow_lo = 0, ow_hi = OW;
                                        while (ow_lo < OW && ow_lo * s - p + kwi < 0) ++ow_lo;
                                        while (ow_hi > ow_lo && (ow_hi - 1) * s - p + kwi >= W) --ow_hi;
                                        if (ow_lo >= ow_hi) continue;
                                        const T* g_row = g_base + static_cast<std::size_t>(oh) * OW + ow_lo;
                                        T* gin_row =
                                            gin_base + static_cast<std::size_t>(ih) * W + (ow_lo * s - p + kwi);
                                        const int span = ow_hi - ow_lo;
                                        if (s == 1) {
                                            detail::axpy(gin_row, g_row, wv, span);
                                        } else {
                                            detail::axpy_strided(gin_row, g_row, wv, span, s, 1);
                                        }
                                    }
                                }
                        }
                    }
                });
            }
            if (kernel->requires_grad()) {
                T* gk = kernel->grad().data();
                parallel_for(static_cast<std::size_t>(O), [&](std::size_t b, std::size_t e) {
                    for (std::size_t o = b; o < e; ++o) {
                        for (int c = 0; c < C; ++c)
                            for (int kh = 0; kh < KH; ++kh)
                                for (int kwi = 0; kwi < KW; ++kwi) {
                                    // vectorizable row dots in T, row results
                                    // accumulated in 64-bit
                                    double acc = 0.0;
                                    for (int n = 0; n < N; ++n) {
                                        const T* g_base = g + (static_cast<std::size_t>(n) * O + o) * out_plane;
                                        const T* in_base = in + (static_cast<std::size_t>(n) * C + c) * in_plane;
                                        for (int oh = 0; oh < OH; ++oh) {
                                            const int ih = oh * s - p + kh;
                                            if (ih < 0 || ih >= H) continue;
                                            int ow_lo = 0, ow_hi = OW;
                                            while (ow_lo < OW && ow_lo * s - p + kwi < 0) ++ow_lo;
                                            while (ow_hi > ow_lo && (ow_hi - 1) * s - p + kwi >= W) --ow_hi;
                                            if (ow_lo >= ow_hi) continue;
                                            const T* g_row = g_base + static_cast<std::size_t>(oh) * OW + ow_lo;
                                            const T* in_row = in_base + static_cast<std::size_t>(ih) * W +
                                                              (ow_lo * s - p + kwi);
                                            const int span = ow_hi - ow_lo;
                                            const T row = s == 1
                                                              ? detail::striped_dot(g_row, in_row, span)
                                                              : detail::striped_dot_strided(g_row, in_row, span, s);
                                            acc += static_cast<double>(row);
                                        }
                                    }
                                    gk[((o * C + c) * KH + kh) * KW + kwi] += static_cast<T>(acc);
                                }
                    }
                });
            }
        });
    }
    return out;
}

/// Add a per-channel bias (shape {C}) to an NCHW tensor.
template <typename T>
TensorPtr<T> add_channel_bias(const TensorPtr<T>& x, const TensorPtr<T>& bias) {
    detail::require_nchw(x, "add_channel_bias");
    const auto& sx = x->shape();
    if (bias->rank() != 1 || bias->dim(0) != sx[1])
        throw ContractViolation("add_channel_bias: bias shape " + shape_str(bias->shape()) +
                                " does not match channels of " + shape_str(sx));
    const int N = sx[0], C = sx[1];
    const std::size_t plane = static_cast<std::size_t>(sx[2]) * sx[3];
    auto out = Tensor<T>::zeros(sx, detail::any_grad<T>({x, bias}));
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T bv = bias->data()[static_cast<std::size_t>(c)];
            const T* xp = x->data().data() + (n * C + c) * plane;
            T* op = out->data().data() + (n * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] = xp[i] + bv;
        }
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x, bias}, [x, bias, o, N, C, plane] {
            const auto& g = o->grad();
            if (x->requires_grad()) {
                auto& gx = x->grad();
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (bias->requires_grad()) {
                auto& gb = bias->grad();
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const T* gp = g.data() + (n * C + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(gp[i]);
                    }
                    gb[static_cast<std::size_t>(c)] += static_cast<T>(acc);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Upsampling

/// Nearest-neighbor 2x upsampling: every value becomes a 2x2 block.
template <typename T>
TensorPtr<T> upsample2x_nearest(const TensorPtr<T>& x) {
    detail::require_nchw(x, "upsample2x_nearest");
    const auto& s = x->shape();
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    auto out = Tensor<T>::zeros({N, C, 2 * H, 2 * W}, x->requires_grad());
    const T* xp = x->data().data();
    T* op = out->data().data();
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = xp + static_cast<std::size_t>(nc) * H * W;
        T* dst = op + static_cast<std::size_t>(nc) * 4 * H * W;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const T v = src[h * W + w];
                T* d = dst + (2 * h) * (2 * W) + 2 * w;
                d[0] = v;
                d[1] = v;
                d[2 * W] = v;
                d[2 * W + 1] = v;
            }
    }
    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x}, [x, o, N, C, H, W] {
            const auto& g = o->grad();
            auto& gx = x->grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const T* gp = g.data() + static_cast<std::size_t>(nc) * 4 * H * W;
                T* gxp = gx.data() + static_cast<std::size_t>(nc) * H * W;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        const T* s = gp + (2 * h) * (2 * W) + 2 * w;
                        gxp[h * W + w] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
                    }
            }
        });
    }
    return out;
}

/// Nearest-neighbor 2x upsampling followed by a stride-1 convolution with
/// (K-1)/2 padding, so the output keeps the doubled spatial extents.
template <typename T>
TensorPtr<T> upsample2x_conv(const TensorPtr<T>& input, const TensorPtr<T>& kernel) {
    if (kernel->rank() != 4 || kernel->dim(2) % 2 == 0 || kernel->dim(2) != kernel->dim(3))
        throw ContractViolation("upsample2x_conv: kernel must be OIKK with odd square K, got " +
                                shape_str(kernel->shape()));
    return conv2d(upsample2x_nearest(input), kernel, 1, (kernel->dim(2) - 1) / 2);
}

// ---------------------------------------------------------------------------
// Instance normalization

/// Per-(n,c)-plane normalization followed by a channel affine:
/// (x - mean)/sqrt(var + eps) * gamma_c + beta_c. Statistics use the biased
/// variance and 64-bit accumulation.
template <typename T>
TensorPtr<T> instance_norm(const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                           double eps = 1e-5) {
    detail::require_nchw(x, "instance_norm");
    if (eps <= 0.0) throw ContractViolation("instance_norm: eps must be > 0");
    const auto& s = x->shape();
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    if (gamma->rank() != 1 || gamma->dim(0) != C || beta->rank() != 1 || beta->dim(0) != C)
        throw ContractViolation("instance_norm: gamma/beta must have shape [" + std::to_string(C) + "]");
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    auto out = Tensor<T>::zeros(s, detail::any_grad<T>({x, gamma, beta}));

    // inv_std per (n,c), needed again in the backward pass
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * C);
    auto means = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * C);
    for (int nc = 0; nc < N * C; ++nc) {
        const T* xp = x->data().data() + static_cast<std::size_t>(nc) * plane;
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double v = static_cast<double>(xp[i]);
            sum += v;
            sum_sq += v * v;
        }
        const double mu = sum / static_cast<double>(plane);
        const double var = std::max(0.0, sum_sq / static_cast<double>(plane) - mu * mu);
        (*means)[static_cast<std::size_t>(nc)] = mu;
        (*inv_std)[static_cast<std::size_t>(nc)] = 1.0 / std::sqrt(var + eps);
        const int c = nc % C;
        const double gv = static_cast<double>(gamma->data()[static_cast<std::size_t>(c)]);
        const double bv = static_cast<double>(beta->data()[static_cast<std::size_t>(c)]);
        T* op = out->data().data() + static_cast<std::size_t>(nc) * plane;
        const double inv = (*inv_std)[static_cast<std::size_t>(nc)];
        for (std::size_t i = 0; i < plane; ++i)
            op[i] = static_cast<T>((static_cast<double>(xp[i]) - mu) * inv * gv + bv);
    }

    if (out->requires_grad()) {
        Tensor<T>* o = out.get();
        out->set_history({x, gamma, beta}, [x, gamma, beta, o, N, C, plane, inv_std, means] {
            const auto& g = o->grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const int c = nc % C;
                const std::size_t base = static_cast<std::size_t>(nc) * plane;
                const double mu = (*means)[static_cast<std::size_t>(nc)];
                const double inv = (*inv_std)[static_cast<std::size_t>(nc)];
                const double gv = static_cast<double>(gamma->data()[static_cast<std::size_t>(c)]);
                // plane reductions for dgamma/dbeta and the x backprop terms
                double sum_g = 0.0, sum_g_xhat = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double gi = static_cast<double>(g[base + i]);
                    const double xhat = (static_cast<double>(x->data()[base + i]) - mu) * inv;
                    sum_g += gi;
                    sum_g_xhat += gi * xhat;
                }
                if (gamma->requires_grad()) gamma->grad()[static_cast<std::size_t>(c)] += static_cast<T>(sum_g_xhat);
                if (beta->requires_grad()) beta->grad()[static_cast<std::size_t>(c)] += static_cast<T>(sum_g);
                if (x->requires_grad()) {
                    auto& gx = x->grad();
                    const double mean_g = sum_g / static_cast<double>(plane);
                    const double mean_g_xhat = sum_g_xhat / static_cast<double>(plane);
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double gi = static_cast<double>(g[base + i]);
                        const double xhat = (static_cast<double>(x->data()[base + i]) - mu) * inv;
                        gx[base + i] += static_cast<T>(gv * inv * (gi - mean_g - xhat * mean_g_xhat));
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Non-graph helpers (inference-side)

template <typename T>
TensorPtr<T> clamp01(const TensorPtr<T>& x) {
    auto out = x->detach();
    for (auto& v : out->data()) v = std::min(T(1), std::max(T(0), v));
    return out;
}

}  // namespace dnl
