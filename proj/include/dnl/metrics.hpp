#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/data.hpp"
#include "dnl/nn.hpp"
#include "dnl/ops.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

// ---------------------------------------------------------------------------
// Image quality metrics

/// Peak signal-to-noise ratio in dB: 10*log10(data_range^2 / MSE), with MSE
/// accumulated in 64-bit. Identical inputs yield +infinity, a distinguished
/// value that aggregation must handle explicitly.
template <typename T>
double psnr(const TensorPtr<T>& reference, const TensorPtr<T>& test, double data_range = 1.0) {
    detail::require_same_shape(reference, test, "psnr");
    if (!(data_range > 0.0)) throw ContractViolation("psnr: data_range must be > 0");
    if (reference->numel() == 0) throw ContractViolation("psnr: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < reference->numel(); ++i) {
        const double d = static_cast<double>(reference->data()[i]) - static_cast<double>(test->data()[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(reference->numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

/// SSIM parameters: 11x11 Gaussian window with sigma 1.5, K1 = 0.01,
/// K2 = 0.03, data range 1, the conventional constants.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Mean local SSIM over all positions where the full window fits, averaged
/// across channels and batch. Symmetric in its arguments; 1.0 exactly for
/// identical images.
template <typename T>
double ssim(const TensorPtr<T>& reference, const TensorPtr<T>& test, const SsimParams& p = {}) {
    detail::require_same_shape(reference, test, "ssim");
    detail::require_nchw(reference, "ssim");
    const int N = reference->dim(0), C = reference->dim(1), H = reference->dim(2), W = reference->dim(3);
    if (H < p.window || W < p.window)
        throw ContractViolation("ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                                " smaller than window " + std::to_string(p.window));
    // normalized separable Gaussian window
    std::vector<double> w1(static_cast<std::size_t>(p.window));
    const double half = (p.window - 1) / 2.0;
    double wsum = 0.0;
    for (int i = 0; i < p.window; ++i) {
        const double d = i - half;
        w1[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
        wsum += w1[static_cast<std::size_t>(i)];
    }
    for (auto& v : w1) v /= wsum;

    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    double total = 0.0;
    std::size_t count = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* a = reference->data().data() + static_cast<std::size_t>(nc) * plane;
        const T* b = test->data().data() + static_cast<std::size_t>(nc) * plane;
        for (int y = 0; y + p.window <= H; ++y)
            for (int x = 0; x + p.window <= W; ++x) {
                double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
                for (int wy = 0; wy < p.window; ++wy) {
                    const T* ar = a + static_cast<std::size_t>(y + wy) * W + x;
                    const T* br = b + static_cast<std::size_t>(y + wy) * W + x;
                    const double wv = w1[static_cast<std::size_t>(wy)];
                    for (int wx = 0; wx < p.window; ++wx) {
                        const double wgt = wv * w1[static_cast<std::size_t>(wx)];
                        const double av = static_cast<double>(ar[wx]);
                        const double bv = static_cast<double>(br[wx]);
                        mx += wgt * av;
                        my += wgt * bv;
                        sxx += wgt * av * av;
                        syy += wgt * bv * bv;
                        sxy += wgt * av * bv;
                    }
                }
                const double vx = sxx - mx * mx;
                const double vy = syy - my * my;
                const double cxy = sxy - mx * my;
                const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
                const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                total += num / den;
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

/// The composite evaluation score: PSNR/40 + SSIM.
inline double composite_score(double psnr_db, double ssim_value) {
    return psnr_db / 40.0 + ssim_value;
}

/// Per-image metric row; the composite score is always recomputed from the
/// stored PSNR/SSIM rather than stored separately.
struct MetricsRecord {
    std::string image_id;
    double psnr_db = 0.0;
    double ssim = 0.0;

    double est_score() const { return composite_score(psnr_db, ssim); }
};

// ---------------------------------------------------------------------------
// Tweedie posterior-mean inference

/// Map a noisy observation and a score estimate to the posterior mean:
/// Gaussian: y + sigma^2 * score
/// Poisson:  (y + zeta/2) * exp(zeta * score)
/// Gamma:    alpha * y / ((alpha - 1) - y * score)
/// The Gamma branch requires (alpha-1) - y*score > 0 at every pixel; a
/// violation raises a singularity error reporting the offending pixel count.
template <typename T>
TensorPtr<T> tweedie_denoise(const TensorPtr<T>& y, const TensorPtr<T>& score, const NoiseModel& model) {
    detail::require_same_shape(y, score, "tweedie_denoise");
    auto out = Tensor<T>::zeros(y->shape());
    const std::size_t n = y->numel();
    switch (model.kind()) {
        case NoiseModel::Kind::gaussian: {
            const double s2 = model.sigma2();
            for (std::size_t i = 0; i < n; ++i)
                out->data()[i] =
                    static_cast<T>(static_cast<double>(y->data()[i]) + s2 * static_cast<double>(score->data()[i]));
            break;
        }
        case NoiseModel::Kind::poisson: {
            const double zeta = model.zeta();
            for (std::size_t i = 0; i < n; ++i)
                out->data()[i] = static_cast<T>((static_cast<double>(y->data()[i]) + zeta / 2.0) *
                                                std::exp(zeta * static_cast<double>(score->data()[i])));
            break;
        }
        case NoiseModel::Kind::gamma: {
            const double alpha = model.alpha();
            std::size_t bad = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double denom = (alpha - 1.0) -
                                     static_cast<double>(y->data()[i]) * static_cast<double>(score->data()[i]);
                if (denom <= 0.0) {
                    ++bad;
                    continue;
                }
                out->data()[i] = static_cast<T>(alpha * static_cast<double>(y->data()[i]) / denom);
            }
            if (bad > 0)
                throw NumericError("tweedie_denoise: gamma denominator <= 0 at " + std::to_string(bad) +
                                   " of " + std::to_string(n) + " pixels");
            break;
        }
    }
    return out;
}

/// Score-network denoising: the network output on y is used directly as the
/// score estimate and fed through the Tweedie map for the assumed model.
/// The config must be in score mode (no global skip on the score branch).
template <typename T>
TensorPtr<T> denoise_n2s(const ModelParams<T>& rtheta, const GeneratorConfig& cfg, const TensorPtr<T>& y,
                         const NoiseModel& model) {
    if (!cfg.score_mode)
        throw ContractViolation("denoise_n2s: generator config must have score_mode set");
    auto score = generator_forward(rtheta, cfg, y->detach());
    return tweedie_denoise(y, score->detach(), model);
}

/// Translator denoising: one generator forward pass, clamped to [0,1] for
/// metric computation.
template <typename T>
TensorPtr<T> denoise_cyclegan(const ModelParams<T>& g_q2f, const GeneratorConfig& cfg, const TensorPtr<T>& y) {
    if (cfg.score_mode)
        throw ContractViolation("denoise_cyclegan: generator config must not be in score mode");
    return clamp01(generator_forward(g_q2f, cfg, y->detach())->detach());
}

}  // namespace dnl
