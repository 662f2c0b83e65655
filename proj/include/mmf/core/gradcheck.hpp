#pragma once

#include <functional>

#include "mmf/nn/param.hpp"

namespace mmf {

// Central finite differences against analytic gradients for an arbitrary
// scalar-valued function of a set of parameters. Works in any precision; the
// repo's gradient tests run it in 64-bit with h = 1e-4.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "<param>[i]" of the worst mismatch
    bool ok(double tol) const { return max_rel_err <= tol; }
};

// `max_per_param` > 0 probes an evenly strided sample of each tensor's
// components instead of all of them (large composite graphs).
template <typename T>
GradCheckResult gradcheck(const std::vector<ParamPtr<T>>& params,
                          const std::function<double()>& loss_fn,
                          const std::function<void()>& grad_fn, double h = 1e-4,
                          std::size_t max_per_param = 0) {
    for (auto& p : params) p->zero_grad();
    grad_fn();
    std::vector<Tensor<T>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p->grad);

    GradCheckResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param<T>& p = *params[pi];
        const std::size_t n = p.value.size();
        const std::size_t stride =
            max_per_param > 0 && n > max_per_param ? (n + max_per_param - 1) / max_per_param : 1;
        for (std::size_t i = 0; i < n; i += stride) {
            const T orig = p.value[i];
            p.value[i] = orig + T(h);
            double lp = loss_fn();
            p.value[i] = orig - T(h);
            double lm = loss_fn();
            p.value[i] = orig;
            double fd = (lp - lm) / (2.0 * h);
            double an = double(analytic[pi][i]);
            double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            double rel = std::abs(fd - an) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

}  // namespace mmf
