#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cpfean/param.hpp"
#include "cpfean/rng.hpp"

namespace cpfean {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;

    bool pass(double tol) const { return max_rel_err < tol; }
};

/// Central-difference check of analytic gradients.
///
/// loss_fn(with_grad) evaluates the loss at the current parameter values;
/// when with_grad is true it must also leave fresh gradients in the
/// parameters (grads are zeroed here first). Every coordinate is checked
/// when max_coords_per_param is 0, otherwise a seeded random sample per
/// parameter. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator.
template <class Real, class LossFn>
GradCheckReport finite_difference_check(LossFn&& loss_fn,
                                        const std::vector<Parameter<Real>*>& params, double h,
                                        std::size_t max_coords_per_param = 0,
                                        std::uint64_t sample_seed = 0) {
    for (auto* p : params) p->zero_grad();
    (void)loss_fn(true);

    std::vector<std::vector<Real>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad.data);

    Rng rng(derive_seed(sample_seed, 0x9d));
    GradCheckReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<Real>& p = *params[pi];
        std::vector<std::size_t> coords;
        if (max_coords_per_param == 0 || p.value.size() <= max_coords_per_param) {
            coords.resize(p.value.size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        } else {
            for (std::size_t k = 0; k < max_coords_per_param; ++k)
                coords.push_back(static_cast<std::size_t>(rng.below(p.value.size())));
        }
        for (std::size_t ci : coords) {
            const Real orig = p.value[ci];
            p.value[ci] = orig + static_cast<Real>(h);
            const double fp = loss_fn(false);
            p.value[ci] = orig - static_cast<Real>(h);
            const double fm = loss_fn(false);
            p.value[ci] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double an = static_cast<double>(analytic[pi][ci]);
            const double denom = std::max({std::fabs(an), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(an - numeric) / denom;
            rep.coords_checked += 1;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p.name;
                rep.worst_index = ci;
                rep.worst_analytic = an;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

} // namespace cpfean
