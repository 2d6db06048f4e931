#pragma once

// Test-only oracles, independent of the library's autodiff path: plain scalar
// reference forwards and a central finite-difference gradient check. Oracles
// evaluate loss functions by perturbing leaf values and re-running whatever
// forward the caller supplies.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dnl/tensor.hpp"

namespace oracle {

// Reference cross-correlation in double, scalar loops, no shortcuts.
inline std::vector<double> conv2d_ref(const std::vector<double>& in, int N, int C, int H, int W,
                                      const std::vector<double>& k, int O, int KH, int KW, int stride, int pad,
                                      int& OH, int& OW) {
    OH = (H + 2 * pad - KH) / stride + 1;
    OW = (W + 2 * pad - KW) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(N) * O * OH * OW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c)
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * stride - pad + kh;
                                const int iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += in[((static_cast<std::size_t>(n) * C + c) * H + ih) * W + iw] *
                                       k[((static_cast<std::size_t>(o) * C + c) * KH + kh) * KW + kw];
                            }
                    out[((static_cast<std::size_t>(n) * O + o) * OH + oh) * OW + ow] = acc;
                }
    return out;
}

/// Central finite differences of `loss` w.r.t. the values of `leaf`, h fixed
/// at 1e-3 per the gradient-check protocol. `loss` must rebuild its forward
/// from the current leaf values on every call.
template <typename T>
std::vector<double> fd_gradient(const dnl::TensorPtr<T>& leaf, const std::function<double()>& loss,
                                double h = 1e-3) {
    std::vector<double> g(leaf->numel());
    for (std::size_t i = 0; i < leaf->numel(); ++i) {
        const T saved = leaf->data()[i];
        leaf->data()[i] = static_cast<T>(static_cast<double>(saved) + h);
        const double up = loss();
        leaf->data()[i] = static_cast<T>(static_cast<double>(saved) - h);
        const double down = loss();
        leaf->data()[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Largest relative disagreement between an analytic and a finite-difference
/// gradient; the denominator floors at 1 so near-zero entries are compared
/// absolutely.
inline double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(fd[i])});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

template <typename T>
std::vector<double> grad_of(const dnl::TensorPtr<T>& leaf) {
    std::vector<double> g(leaf->numel());
    for (std::size_t i = 0; i < leaf->numel(); ++i) g[i] = static_cast<double>(leaf->grad()[i]);
    return g;
}

template <typename T>
void fill_uniform(const dnl::TensorPtr<T>& t, std::mt19937_64& eng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t->data()) v = static_cast<T>(dist(eng));
}

}  // namespace oracle
