#pragma once

// Gradient-check fixtures: one scalar-valued probe per differentiable op plus
// random 3-layer compositions. Each probe reduces its op output against a
// fixed random weighting so every output element influences the loss.

#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace stalign::testing {

struct OpProbe {
    std::string name;
    std::vector<TensorD> inputs;
    std::function<TensorD(std::vector<TensorD>&)> fn;
};

/// sum(w ⊙ y) with a fixed random w, so the loss is not a symmetric function of y.
inline TensorD weighted_sum(const TensorD& y, std::uint64_t seed) {
    Rng rng(seed);
    auto w = random_tensor(y.shape(), rng, -1.0, 1.0, false);
    return ad::sum(ad::mul(y, w));
}

inline std::vector<OpProbe> op_probes(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<OpProbe> out;
    auto r = [&](ad::Shape s) { return random_tensor(std::move(s), rng); };

    out.push_back({"matmul", {r({3, 4}), r({4, 2})}, [](auto& x) { return weighted_sum(ad::matmul(x[0], x[1]), 1); }});
    out.push_back({"transpose", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::transpose(x[0]), 2); }});
    out.push_back({"add", {r({2, 3}), r({2, 3})}, [](auto& x) { return weighted_sum(ad::add(x[0], x[1]), 3); }});
    out.push_back({"sub", {r({2, 3}), r({2, 3})}, [](auto& x) { return weighted_sum(ad::sub(x[0], x[1]), 4); }});
    out.push_back({"mul", {r({2, 3}), r({2, 3})}, [](auto& x) { return weighted_sum(ad::mul(x[0], x[1]), 5); }});
    out.push_back({"scale", {r({5})}, [](auto& x) { return weighted_sum(ad::scale(x[0], -1.7), 6); }});
    {
        Rng srng(seed + 99);
        auto s = TensorD::scalar(srng.uniform(0.5, 2.0), true);
        out.push_back({"div_by_scalar", {r({2, 3}), s}, [](auto& x) { return weighted_sum(ad::div_by_scalar(x[0], x[1]), 7); }});
    }
    out.push_back({"add_bias", {r({3, 4}), r({4})}, [](auto& x) { return weighted_sum(ad::add_bias(x[0], x[1]), 8); }});
    out.push_back({"linear", {r({3, 4}), r({4, 5}), r({5})}, [](auto& x) { return weighted_sum(ad::linear(x[0], x[1], x[2]), 9); }});
    out.push_back({"gelu", {r({2, 5})}, [](auto& x) { return weighted_sum(ad::gelu(x[0]), 10); }});
    out.push_back({"tanh", {r({2, 5})}, [](auto& x) { return weighted_sum(ad::tanh(x[0]), 11); }});
    out.push_back({"softmax_last", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::softmax(x[0], 1), 12); }});
    out.push_back({"softmax_first", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::softmax(x[0], 0), 13); }});
    out.push_back({"log_softmax", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::log_softmax(x[0], 1), 14); }});
    out.push_back({"layer_norm", {r({3, 5}), r({5}), r({5})},
                   [](auto& x) { return weighted_sum(ad::layer_norm(x[0], x[1], x[2]), 15); }});
    out.push_back({"concat", {r({2, 3}), r({2, 2})}, [](auto& x) {
                       std::vector<TensorD> xs{x[0], x[1]};
                       return weighted_sum(ad::concat<double>(xs, 1), 16);
                   }});
    out.push_back({"mean", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::mean(x[0], 0), 17); }});
    out.push_back({"sum", {r({3, 4})}, [](auto& x) { return ad::sum(ad::mul(x[0], x[0])); }});
    out.push_back({"reshape", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::reshape(x[0], {4, 3}), 18); }});
    out.push_back({"diagonal", {r({3, 3})}, [](auto& x) { return weighted_sum(ad::diagonal(x[0]), 19); }});
    out.push_back({"l2_normalize_rows", {r({3, 4})}, [](auto& x) { return weighted_sum(ad::l2_normalize_rows(x[0]), 20); }});
    out.push_back({"row_mix", {r({4, 3})}, [](auto& x) {
                       ad::RowMix mix;
                       mix.rows = {{{0, 1.0}}, {{1, 0.5}, {3, 0.5}}, {{2, -2.0}, {2, 1.0}}};
                       return weighted_sum(ad::row_mix(x[0], mix), 21);
                   }});
    out.push_back({"attention", {r({6, 4}), r({6, 4}), r({6, 4})}, [](auto& x) {
                       ad::AttentionLayout layout;
                       layout.group_size = 3;
                       layout.num_heads = 2;
                       return weighted_sum(ad::attention(x[0], x[1], x[2], layout), 22);
                   }});
    out.push_back({"attention_masked", {r({5, 4}), r({5, 4}), r({5, 4})}, [](auto& x) {
                       ad::AttentionLayout layout;
                       layout.group_size = 5;
                       layout.num_heads = 2;
                       layout.key_mask = {1, 1, 0, 1, 0};
                       return weighted_sum(ad::attention(x[0], x[1], x[2], layout), 23);
                   }});
    return out;
}

/// A random 3-layer network over a [4x5] input: each layer picks one of
/// several nonlinear blocks; the loss is a weighted sum of the output.
inline OpProbe random_composition(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TensorD> inputs{random_tensor({4, 5}, rng)};
    std::vector<int> kinds;
    for (int layer = 0; layer < 3; ++layer) {
        const int kind = static_cast<int>(rng.below(5));
        kinds.push_back(kind);
        switch (kind) {
            case 0:  // linear + gelu
            case 1:  // linear + tanh
                inputs.push_back(random_tensor({5, 5}, rng, -1.0, 1.0));
                inputs.push_back(random_tensor({5}, rng, -1.0, 1.0));
                break;
            case 2:  // layer norm
                inputs.push_back(random_tensor({5}, rng));
                inputs.push_back(random_tensor({5}, rng));
                break;
            case 3:  // softmax then elementwise product with a weight
                inputs.push_back(random_tensor({4, 5}, rng));
                break;
            default:  // self-attention, 1 group, 1 head, with a projection
                inputs.push_back(random_tensor({5, 5}, rng, -1.0, 1.0));
                break;
        }
    }
    OpProbe probe;
    probe.name = "composition#" + std::to_string(seed);
    probe.inputs = inputs;
    probe.fn = [kinds, seed](std::vector<TensorD>& x) {
        TensorD h = x[0];
        std::size_t p = 1;
        for (int kind : kinds) {
            switch (kind) {
                case 0:
                    h = ad::gelu(ad::linear(h, x[p], x[p + 1]));
                    p += 2;
                    break;
                case 1:
                    h = ad::tanh(ad::linear(h, x[p], x[p + 1]));
                    p += 2;
                    break;
                case 2:
                    h = ad::layer_norm(h, x[p], x[p + 1]);
                    p += 2;
                    break;
                case 3:
                    h = ad::mul(ad::softmax(h, 1), x[p]);
                    p += 1;
                    break;
                default: {
                    ad::AttentionLayout layout;
                    layout.group_size = 4;
                    layout.num_heads = 1;
                    auto q = ad::matmul(h, x[p]);
                    h = ad::attention(q, h, h, layout);
                    p += 1;
                    break;
                }
            }
        }
        return weighted_sum(h, seed * 31 + 7);
    };
    return probe;
}

}  // namespace stalign::testing
