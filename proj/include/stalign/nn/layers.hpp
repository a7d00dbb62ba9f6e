#pragma once

// Small building blocks shared by the video and text towers. Each layer holds
// handles to tensors owned by a ParameterStore.

#include <string>
#include <vector>

#include "stalign/autodiff/parameters.hpp"
#include "stalign/autodiff/tensor.hpp"

namespace stalign::nn {

using ad::Tensor;

/// Attention probabilities captured during a forward pass.
struct AttentionRecord {
    std::string site;
    std::size_t group_size = 0;
    std::size_t num_heads = 0;
    std::vector<unsigned char> key_mask;
    std::vector<double> probs;  // [group][head][query][key]
};

/// Optional observer for inspecting intermediate state in tests.
struct ForwardTrace {
    std::vector<AttentionRecord> attention;
    std::vector<Tensor> block_outputs;
};

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear create(ad::ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                         Rng& rng);
    /// Weight and bias start at exactly zero.
    static Linear create_zero(ad::ParameterStore& store, const std::string& prefix, std::size_t in,
                              std::size_t out);
    Tensor operator()(const Tensor& x) const { return ad::linear(x, weight, bias); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    static LayerNorm create(ad::ParameterStore& store, const std::string& prefix, std::size_t dim);
    Tensor operator()(const Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
};

struct Mlp {
    Linear fc1;
    Linear fc2;

    static Mlp create(ad::ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                      Rng& rng);
    Tensor operator()(const Tensor& x) const { return fc2(ad::gelu(fc1(x))); }
};

/// Multi-head self-attention over contiguous row groups.
struct SelfAttention {
    Linear q, k, v, out;
    std::size_t num_heads = 1;

    static SelfAttention create(ad::ParameterStore& store, const std::string& prefix, std::size_t dim,
                                std::size_t num_heads, Rng& rng, bool zero_output = false);

    Tensor operator()(const Tensor& x, std::size_t group_size, std::vector<unsigned char> key_mask = {},
                      ForwardTrace* trace = nullptr, const std::string& site = {}) const;
};

}  // namespace stalign::nn
