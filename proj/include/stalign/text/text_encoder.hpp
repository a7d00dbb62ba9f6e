#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "stalign/autodiff/parameters.hpp"
#include "stalign/nn/layers.hpp"
#include "stalign/text/tokenizer.hpp"

namespace stalign::text {

using ad::Tensor;

struct TextConfig {
    std::size_t embed_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t max_len = 128;
    std::size_t mlp_ratio = 4;

    void validate() const;
    /// Six 768-wide layers, 12 heads, 512 positions.
    static TextConfig paper();
    static TextConfig desk() { return {}; }
};

struct TextBlock {
    nn::LayerNorm norm_attn;
    nn::SelfAttention attn;
    nn::LayerNorm norm_mlp;
    nn::Mlp mlp;
};

/// Bidirectional pre-norm transformer; returns the final-layer [CLS] state.
class TextEncoder {
public:
    /// Registers parameters as "text.*".
    TextEncoder(const TextConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

    const TextConfig& config() const { return cfg_; }
    std::size_t vocab_size() const { return vocab_size_; }
    ad::ParameterStore& parameters() { return store_; }
    const ad::ParameterStore& parameters() const { return store_; }

    /// [1, embed_dim]. Throws ContractError when the sequence exceeds max_len
    /// or does not start with [CLS].
    Tensor encode(const TokenizedText& tok, nn::ForwardTrace* trace = nullptr) const;

    std::size_t forward_count() const { return forward_count_.load(); }
    void reset_forward_count() { forward_count_.store(0); }

private:
    TextConfig cfg_;
    std::size_t vocab_size_;
    ad::ParameterStore store_;
    Tensor token_embed_;  // [vocab, d]
    Tensor pos_embed_;    // [max_len, d]
    std::vector<TextBlock> blocks_;
    nn::LayerNorm final_norm_;
    mutable std::atomic<std::size_t> forward_count_{0};
};

}  // namespace stalign::text
