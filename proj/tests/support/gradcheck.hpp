#pragma once

// Central finite-difference oracle for the autodiff engine. Runs in double so
// the comparison measures backward formulas, not float rounding.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "stalign/autodiff/tensor.hpp"
#include "stalign/util/rng.hpp"

namespace stalign::testing {

using ad::TensorD;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor
/// sits above the O(h^2) truncation error of the h=1e-3 central difference.
inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `f` must rebuild its graph from the given leaves on every call.
inline GradCheckResult grad_check(const std::function<TensorD(std::vector<TensorD>&)>& f,
                                  std::vector<TensorD>& inputs, double h = 1e-3) {
    for (auto& x : inputs) x.zero_grad();
    TensorD loss = f(inputs);
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& x : inputs) {
        if (x.has_grad()) {
            analytic.emplace_back(x.grad().begin(), x.grad().end());
        } else {
            analytic.emplace_back(x.numel(), 0.0);
        }
    }

    GradCheckResult res;
    ad::NoGradGuard no_grad;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (!inputs[t].requires_grad()) continue;
        auto vals = inputs[t].mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double fp = f(inputs).item();
            vals[i] = orig - h;
            const double fm = f(inputs).item();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[t][i], numeric));
            ++res.checked;
        }
    }
    return res;
}

inline TensorD random_tensor(ad::Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0, bool rg = true) {
    std::vector<double> v(ad::shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return TensorD::from(std::move(shape), std::move(v), rg);
}

}  // namespace stalign::testing
