#pragma once

#include <cmath>

#include "dnl/common.hpp"
#include "dnl/ops.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

/// Weights of the cycle and identity terms in the full generator objective.
struct LossWeights {
    double lambda_cycle = 30.0;
    double lambda_iden = 2.0;

    void validate() const {
        if (!(std::isfinite(lambda_cycle) && lambda_cycle >= 0.0))
            throw ContractViolation("LossWeights: lambda_cycle must be finite and >= 0");
        if (!(std::isfinite(lambda_iden) && lambda_iden >= 0.0))
            throw ContractViolation("LossWeights: lambda_iden must be finite and >= 0");
    }
};

namespace detail {
template <typename T>
void require_nonempty(const TensorPtr<T>& t, const char* op) {
    if (t->numel() == 0) throw ContractViolation(std::string(op) + ": empty tensor");
}
}  // namespace detail

/// Least-squares discriminator loss: mean((real-1)^2) + mean(fake^2).
template <typename T>
TensorPtr<T> lsgan_d_loss(const TensorPtr<T>& real_scores, const TensorPtr<T>& fake_scores) {
    detail::require_nonempty(real_scores, "lsgan_d_loss");
    detail::require_nonempty(fake_scores, "lsgan_d_loss");
    return add(mean_all(square(add_scalar(real_scores, -1.0))), mean_all(square(fake_scores)));
}

/// Least-squares generator loss: mean((fake-1)^2).
template <typename T>
TensorPtr<T> lsgan_g_loss(const TensorPtr<T>& fake_scores) {
    detail::require_nonempty(fake_scores, "lsgan_g_loss");
    return mean_all(square(add_scalar(fake_scores, -1.0)));
}

/// Mean absolute difference; serves both the cycle and identity terms.
template <typename T>
TensorPtr<T> l1_loss(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "l1_loss");
    detail::require_nonempty(a, "l1_loss");
    return mean_all(abs_t(sub(a, b)));
}

/// Full generator objective:
/// (adv_F + adv_Q) + lambda_cycle*(cyc_F + cyc_Q) + lambda_iden*(idn_F + idn_Q).
template <typename T>
TensorPtr<T> generator_total(const TensorPtr<T>& adv_f, const TensorPtr<T>& adv_q, const TensorPtr<T>& cyc_f,
                             const TensorPtr<T>& cyc_q, const TensorPtr<T>& idn_f, const TensorPtr<T>& idn_q,
                             const LossWeights& w) {
    w.validate();
    auto total = add(adv_f, adv_q);
    total = add(total, scale(add(cyc_f, cyc_q), w.lambda_cycle));
    return add(total, scale(add(idn_f, idn_q), w.lambda_iden));
}

/// Discriminator objective: half the adversarial loss.
template <typename T>
TensorPtr<T> discriminator_total(const TensorPtr<T>& adv) {
    return scale(adv, 0.5);
}

/// Score-learning objective: mean of squared entries of (u + sigma_a * r_out).
/// The perturbation direction u carries no gradient; r_out is the network
/// output on the perturbed input.
template <typename T>
TensorPtr<T> ardae_loss(const TensorPtr<T>& u, double sigma_a, const TensorPtr<T>& r_out) {
    detail::require_same_shape(u, r_out, "ardae_loss");
    detail::require_nonempty(u, "ardae_loss");
    return mean_all(square(add(u, scale(r_out, sigma_a))));
}

}  // namespace dnl
