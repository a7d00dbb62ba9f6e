#include "stalign/data/sampling.hpp"

#include <algorithm>
#include <string>

#include "stalign/errors.hpp"
#include "stalign/util/rng.hpp"

namespace stalign::data {

void SamplingPlan::validate() const {
    if (total_frames == 0 || segments == 0 || stride == 0) {
        throw ConfigError("sampling plan: L, M and S must all be at least 1 (got L=" + std::to_string(total_frames) +
                          ", M=" + std::to_string(segments) + ", S=" + std::to_string(stride) + ")");
    }
}

std::vector<std::size_t> tsn_sample(const SamplingPlan& plan, std::uint64_t seed) {
    plan.validate();
    if (plan.mode != SamplingMode::Train) throw ContractError("tsn_sample: plan is not in train mode");
    Rng rng(mix_seed(seed, "tsn"));
    std::vector<std::size_t> out(plan.segments);
    for (std::size_t i = 0; i < plan.segments; ++i) {
        const std::size_t b = plan.segment_begin(i), e = plan.segment_end(i);
        out[i] = e > b ? b + rng.below(e - b) : std::min(b, plan.total_frames - 1);
    }
    return out;
}

std::vector<std::vector<std::size_t>> inference_plan(const SamplingPlan& plan) {
    plan.validate();
    if (plan.mode != SamplingMode::Inference) throw ContractError("inference_plan: plan is not in inference mode");
    std::size_t shortest = plan.total_frames;
    for (std::size_t i = 0; i < plan.segments; ++i)
        shortest = std::min(shortest, plan.segment_end(i) - plan.segment_begin(i));
    shortest = std::max<std::size_t>(shortest, 1);

    std::vector<std::vector<std::size_t>> lists;
    for (std::size_t k = 0; k < shortest; k += plan.stride) {
        std::vector<std::size_t> idx(plan.segments);
        for (std::size_t i = 0; i < plan.segments; ++i) {
            const std::size_t b = plan.segment_begin(i), e = plan.segment_end(i);
            idx[i] = e > b ? std::min(b + k, e - 1) : std::min(b, plan.total_frames - 1);
        }
        lists.push_back(std::move(idx));
    }
    return lists;
}

void ClipEmbeddingSet::add(std::vector<float> v) {
    if (!members.empty() && v.size() != members.front().size()) {
        throw ShapeError("clip embedding set: member of width " + std::to_string(v.size()) + " joins width " +
                         std::to_string(members.front().size()));
    }
    members.push_back(std::move(v));
}

std::vector<float> ClipEmbeddingSet::mean() const {
    if (members.empty()) throw ContractError("clip embedding set is empty");
    std::vector<double> acc(members.front().size(), 0.0);
    for (const auto& m : members)
        for (std::size_t j = 0; j < m.size(); ++j) acc[j] += m[j];
    std::vector<float> out(acc.size());
    for (std::size_t j = 0; j < acc.size(); ++j) out[j] = static_cast<float>(acc[j] / static_cast<double>(members.size()));
    return out;
}

}  // namespace stalign::data
