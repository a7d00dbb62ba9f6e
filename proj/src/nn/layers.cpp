#include "stalign/nn/layers.hpp"

namespace stalign::nn {

Linear Linear::create(ad::ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                      Rng& rng) {
    Linear l;
    l.weight = store.add_xavier(prefix + ".weight", in, out, rng);
    l.bias = store.add_zeros(prefix + ".bias", {out});
    return l;
}

Linear Linear::create_zero(ad::ParameterStore& store, const std::string& prefix, std::size_t in,
                           std::size_t out) {
    Linear l;
    l.weight = store.add_zeros(prefix + ".weight", {in, out});
    l.bias = store.add_zeros(prefix + ".bias", {out});
    return l;
}

LayerNorm LayerNorm::create(ad::ParameterStore& store, const std::string& prefix, std::size_t dim) {
    LayerNorm n;
    n.gamma = store.add_constant(prefix + ".gamma", {dim}, 1.0F);
    n.beta = store.add_zeros(prefix + ".beta", {dim});
    return n;
}

Mlp Mlp::create(ad::ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                Rng& rng) {
    Mlp m;
    m.fc1 = Linear::create(store, prefix + ".fc1", dim, hidden, rng);
    m.fc2 = Linear::create(store, prefix + ".fc2", hidden, dim, rng);
    return m;
}

SelfAttention SelfAttention::create(ad::ParameterStore& store, const std::string& prefix, std::size_t dim,
                                    std::size_t num_heads, Rng& rng, bool zero_output) {
    SelfAttention a;
    a.num_heads = num_heads;
    a.q = Linear::create(store, prefix + ".q", dim, dim, rng);
    a.k = Linear::create(store, prefix + ".k", dim, dim, rng);
    a.v = Linear::create(store, prefix + ".v", dim, dim, rng);
    a.out = zero_output ? Linear::create_zero(store, prefix + ".out", dim, dim)
                        : Linear::create(store, prefix + ".out", dim, dim, rng);
    return a;
}

Tensor SelfAttention::operator()(const Tensor& x, std::size_t group_size, std::vector<unsigned char> key_mask,
                                 ForwardTrace* trace, const std::string& site) const {
    ad::AttentionLayout layout;
    layout.group_size = group_size;
    layout.num_heads = num_heads;
    layout.key_mask = std::move(key_mask);
    AttentionRecord record;
    if (trace != nullptr) layout.probs_out = &record.probs;
    auto y = ad::attention(q(x), k(x), v(x), layout);
    if (trace != nullptr) {
        record.site = site;
        record.group_size = group_size;
        record.num_heads = num_heads;
        record.key_mask = layout.key_mask;
        trace->attention.push_back(std::move(record));
    }
    return out(y);
}

}  // namespace stalign::nn
