#include "stalign/autodiff/adam.hpp"

#include <cmath>
#include <string>

namespace stalign::ad {

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState& state) {
    if (state.step_count == 0 && state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), 0.0);
            state.second_moment.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].numel() || state.second_moment[i].size() != params[i].numel()) {
            throw ShapeError("adam_step: moment size mismatch for parameter " + std::to_string(i) + " of shape " +
                             shape_str(params[i].shape()));
        }
    }

    const std::size_t t = state.step_count + 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        // A parameter the loss never reached has an implicit zero gradient.
        const auto g = p.grad();
        const bool has_grad = p.has_grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        auto w = p.mutable_values();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = has_grad ? static_cast<double>(g[j]) : 0.0;
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            w[j] = static_cast<T>(w[j] - state.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + state.eps));
        }
    }
    state.step_count = t;
}

template void adam_step<float>(std::span<BasicTensor<float>>, AdamState&);
template void adam_step<double>(std::span<BasicTensor<double>>, AdamState&);

}  // namespace stalign::ad
