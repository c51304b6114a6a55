#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cpfean/errors.hpp"
#include "cpfean/param.hpp"

namespace cpfean {

/// Adam with the step-decay schedule: the effective learning rate is
/// base_lr * decay_factor^floor(epoch / decay_period).
template <class Real>
struct AdamState {
    double base_lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int decay_period = 15;
    double decay_factor = 0.1;
    std::int64_t step_count = 0;

    std::vector<Tensor<Real>> m;
    std::vector<Tensor<Real>> v;

    AdamState() = default;
    AdamState(const std::vector<Parameter<Real>*>& params, double lr, int decay_every = 15)
        : base_lr(lr), decay_period(decay_every) {
        for (const auto* p : params) {
            m.push_back(Tensor<Real>::zeros(p->value.shape));
            v.push_back(Tensor<Real>::zeros(p->value.shape));
        }
    }

    double effective_lr(int epoch) const {
        int k = decay_period > 0 ? epoch / decay_period : 0;
        return base_lr * std::pow(decay_factor, static_cast<double>(k));
    }
};

/// One Adam update over all parameters. Gradients are read, never written;
/// the caller zeroes them before the next backward pass.
template <class Real>
void adam_step(AdamState<Real>& state, const std::vector<Parameter<Real>*>& params, int epoch) {
    require(state.m.size() == params.size(), "adam_step: state tracks " +
                                                 std::to_string(state.m.size()) + " params, got " +
                                                 std::to_string(params.size()));
    state.step_count += 1;
    const double lr = state.effective_lr(epoch);
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<Real>& p = *params[pi];
        require(p.grad.same_shape(p.value), "adam_step: grad shape " + shape_string(p.grad.shape) +
                                                " does not match param " + p.name + " " +
                                                shape_string(p.value.shape));
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * g;
            const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * g * g;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p.value[i] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

} // namespace cpfean
