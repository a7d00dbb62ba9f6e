#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stalign/autodiff/tensor.hpp"

namespace stalign::ad {

struct AdamState {
    std::size_t step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update over `params`, reading each tensor's
/// accumulated gradient (missing gradient = zero). Moments are sized on the
/// first step; afterwards they must match the parameters exactly.
template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState& state);

}  // namespace stalign::ad
