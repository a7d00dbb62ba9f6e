#include "stalign/autodiff/parameters.hpp"

#include <algorithm>
#include <cmath>

namespace stalign::ad {

Tensor ParameterStore::add(std::string name, Shape shape, std::vector<float> values) {
    if (contains(name)) throw ContractError("parameter store: duplicate name " + name);
    auto t = Tensor::from(std::move(shape), std::move(values), true);
    names_.push_back(std::move(name));
    tensors_.push_back(t);
    return t;
}

Tensor ParameterStore::add_zeros(std::string name, Shape shape) { return add_constant(std::move(name), std::move(shape), 0.0F); }

Tensor ParameterStore::add_constant(std::string name, Shape shape, float value) {
    std::vector<float> v(shape_numel(shape), value);
    return add(std::move(name), std::move(shape), std::move(v));
}

Tensor ParameterStore::add_normal(std::string name, Shape shape, double stddev, Rng& rng) {
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
    return add(std::move(name), std::move(shape), std::move(v));
}

Tensor ParameterStore::add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<float> v(fan_in * fan_out);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return add(std::move(name), {fan_in, fan_out}, std::move(v));
}

const Tensor& ParameterStore::get(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ContractError("parameter store: no parameter named " + std::string(name));
    return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

bool ParameterStore::contains(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParameterStore::total_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

void ParameterStore::merge(const ParameterStore& other, std::string_view prefix) {
    for (std::size_t i = 0; i < other.size(); ++i) {
        const std::string name = std::string(prefix) + other.names_[i];
        if (contains(name)) throw ContractError("parameter store: duplicate name " + name);
        names_.push_back(name);
        tensors_.push_back(other.tensors_[i]);
    }
}

}  // namespace stalign::ad
