#include "stalign/text/text_encoder.hpp"

#include <string>

#include "stalign/errors.hpp"

namespace stalign::text {

void TextConfig::validate() const {
    if (embed_dim == 0 || num_layers == 0 || num_heads == 0 || max_len < 2 || mlp_ratio == 0) {
        throw ConfigError("text config: sizes must be positive and max_len >= 2");
    }
    if (embed_dim % num_heads != 0) {
        throw ConfigError("text config: embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                          std::to_string(num_heads) + " heads");
    }
}

TextConfig TextConfig::paper() {
    TextConfig c;
    c.embed_dim = 768;
    c.num_layers = 6;
    c.num_heads = 12;
    c.max_len = 512;
    return c;
}

TextEncoder::TextEncoder(const TextConfig& cfg, std::size_t vocab_size, std::uint64_t seed)
    : cfg_(cfg), vocab_size_(vocab_size) {
    cfg_.validate();
    if (vocab_size < kFirstWord) throw ConfigError("text encoder: vocabulary smaller than the reserved ids");
    Rng rng(mix_seed(seed, "text"));
    const std::size_t d = cfg_.embed_dim;
    token_embed_ = store_.add_normal("text.token_embed", {vocab_size, d}, 0.02, rng);
    pos_embed_ = store_.add_normal("text.pos_embed", {cfg_.max_len, d}, 0.02, rng);
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        const std::string p = "text.layers." + std::to_string(l);
        TextBlock b;
        b.norm_attn = nn::LayerNorm::create(store_, p + ".norm_attn", d);
        b.attn = nn::SelfAttention::create(store_, p + ".attn", d, cfg_.num_heads, rng);
        b.norm_mlp = nn::LayerNorm::create(store_, p + ".norm_mlp", d);
        b.mlp = nn::Mlp::create(store_, p + ".mlp", d, d * cfg_.mlp_ratio, rng);
        blocks_.push_back(std::move(b));
    }
    final_norm_ = nn::LayerNorm::create(store_, "text.final_norm", d);
}

Tensor TextEncoder::encode(const TokenizedText& tok, nn::ForwardTrace* trace) const {
    const std::size_t n = tok.ids.size();
    if (n == 0 || n > cfg_.max_len) {
        throw ContractError("encode_text: sequence length " + std::to_string(n) + " outside [1, " +
                            std::to_string(cfg_.max_len) + "]");
    }
    if (tok.ids[0] != kCls) throw ContractError("encode_text: position 0 must be [CLS]");
    if (tok.attention_mask.size() != n) throw ContractError("encode_text: mask length differs from ids");
    std::vector<std::size_t> ids(tok.ids.begin(), tok.ids.end()), positions(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (ids[i] >= vocab_size_) {
            throw ContractError("encode_text: token id " + std::to_string(ids[i]) + " outside vocabulary");
        }
        positions[i] = i;
    }
    auto x = ad::add(ad::row_mix(token_embed_, ad::RowMix::gather(ids)),
                     ad::row_mix(pos_embed_, ad::RowMix::gather(positions)));
    for (const auto& b : blocks_) {
        x = ad::add(x, b.attn(b.norm_attn(x), n, tok.attention_mask, trace, "text"));
        x = ad::add(x, b.mlp(b.norm_mlp(x)));
        if (trace != nullptr) trace->block_outputs.push_back(x);
    }
    forward_count_.fetch_add(1);
    const std::size_t cls_row = 0;
    return final_norm_(ad::row_mix(x, ad::RowMix::gather(std::span<const std::size_t>(&cls_row, 1))));
}

}  // namespace stalign::text
