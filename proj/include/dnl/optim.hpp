#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dnl/common.hpp"
#include "dnl/tensor.hpp"

namespace dnl {

/// Adam moment buffers for one parameter group. Buffers are created lazily on
/// the first step and afterwards must keep matching the parameter shapes.
template <typename T>
struct AdamState {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

/// One bias-corrected Adam update over a parameter group. Gradients are read
/// from each tensor's grad buffer; parameters are updated in place.
template <typename T>
void adam_step(const std::vector<TensorPtr<T>>& params, AdamState<T>& state, double lr) {
    if (lr <= 0.0) throw ContractViolation("adam_step: lr must be > 0, got " + std::to_string(lr));
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i]->numel(), T(0));
            state.second_moment[i].assign(params[i]->numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size())
        throw ContractViolation("adam_step: state holds " + std::to_string(state.first_moment.size()) +
                                " buffers for " + std::to_string(params.size()) + " parameters");
    state.step_count += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (state.first_moment[i].size() != p.numel())
            throw ContractViolation("adam_step: moment buffer " + std::to_string(i) + " does not match parameter");
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        auto& g = p.grad();
        auto& w = p.data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
            const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

/// Constant learning rate until decay_start_epoch, then linear decay reaching
/// zero at total_epochs.
struct LrSchedule {
    double base_lr = 1e-4;
    int decay_start_epoch = 100;
    int total_epochs = 1000;
};

inline double lr_at(int epoch, const LrSchedule& s) {
    if (s.base_lr <= 0.0) throw ContractViolation("lr_at: base_lr must be > 0");
    if (s.decay_start_epoch < 0 || s.decay_start_epoch > s.total_epochs)
        throw ContractViolation("lr_at: decay_start_epoch must lie in [0, total_epochs]");
    if (epoch < 0 || epoch >= s.total_epochs)
        throw ContractViolation("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(s.total_epochs) + ")");
    if (epoch < s.decay_start_epoch) return s.base_lr;
    const double span = static_cast<double>(s.total_epochs - s.decay_start_epoch);
    return s.base_lr * static_cast<double>(s.total_epochs - epoch) / span;
}

}  // namespace dnl
