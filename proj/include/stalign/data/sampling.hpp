#pragma once

// Segment-based frame selection. A clip of L frames is cut into M segments
// [floor(iL/M), floor((i+1)L/M)). Training draws one random frame per
// segment; inference walks fixed offsets 0, S, 2S, ... through every segment
// and the resulting clip embeddings are averaged.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace stalign::data {

enum class SamplingMode { Train, Inference };

struct SamplingPlan {
    std::size_t total_frames = 1;  // L
    std::size_t segments = 4;      // M
    std::size_t stride = 1;        // S
    SamplingMode mode = SamplingMode::Train;

    /// Throws ConfigError when L, M or S is zero.
    void validate() const;
    std::size_t segment_begin(std::size_t i) const { return i * total_frames / segments; }
    std::size_t segment_end(std::size_t i) const { return (i + 1) * total_frames / segments; }
};

/// One index per segment. An empty segment (L < M) clamps to the nearest
/// frame, so indices repeat.
std::vector<std::size_t> tsn_sample(const SamplingPlan& plan, std::uint64_t seed);

/// Offset k picks min(segment_begin + k, segment_end - 1) in every segment,
/// for k = 0, S, ... below the shortest segment length.
std::vector<std::vector<std::size_t>> inference_plan(const SamplingPlan& plan);

/// Per-offset clip embeddings and their mean.
struct ClipEmbeddingSet {
    std::vector<std::vector<float>> members;

    void add(std::vector<float> v);
    /// Arithmetic mean, accumulated in double. Throws ContractError when empty.
    std::vector<float> mean() const;
};

}  // namespace stalign::data
