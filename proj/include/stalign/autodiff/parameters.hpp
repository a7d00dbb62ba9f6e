#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "stalign/autodiff/tensor.hpp"
#include "stalign/util/rng.hpp"

namespace stalign::ad {

/// Named, ordered collection of trainable leaves. Names are dotted paths such
/// as "video.blocks.0.mlp.fc1.weight"; insertion order is the checkpoint order.
class ParameterStore {
public:
    Tensor add(std::string name, Shape shape, std::vector<float> values);
    Tensor add_zeros(std::string name, Shape shape);
    Tensor add_constant(std::string name, Shape shape, float value);
    Tensor add_normal(std::string name, Shape shape, double stddev, Rng& rng);
    /// Glorot-uniform for a [fan_in, fan_out] weight.
    Tensor add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng);

    const Tensor& get(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const { return tensors_.size(); }
    std::size_t total_values() const;
    const std::vector<std::string>& names() const { return names_; }
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void zero_grad();
    /// Moves every parameter of `other` into this store under `prefix`.
    void merge(const ParameterStore& other, std::string_view prefix = "");

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

}  // namespace stalign::ad
