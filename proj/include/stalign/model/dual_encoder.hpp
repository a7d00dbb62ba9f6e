#pragma once

#include <cstdint>

#include "stalign/align/alignment.hpp"
#include "stalign/autodiff/parameters.hpp"
#include "stalign/text/text_encoder.hpp"
#include "stalign/video/video_encoder.hpp"

namespace stalign::model {

using ad::Tensor;

struct ModelConfig {
    video::SpaceTimeConfig video;
    text::TextConfig text;
    std::size_t proj_dim = 32;
    double sigma = 0.05;
    bool learn_sigma = false;

    void validate() const;
};

/// Video tower + text tower + one projection per tower, sharing a single
/// parameter store for checkpoints ("video.*", "text.*", "proj.*", and
/// "align.sigma" when the temperature is learned).
class DualEncoder {
public:
    DualEncoder(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ad::ParameterStore& parameters() { return all_; }
    const ad::ParameterStore& parameters() const { return all_; }
    const video::VideoEncoder& video_encoder() const { return video_; }
    const text::TextEncoder& text_encoder() const { return text_; }

    /// Raw tower outputs for a list of inputs, stacked to [n, d].
    Tensor encode_videos(const std::vector<const video::VideoTensor*>& clips) const;
    Tensor encode_texts(const std::vector<const text::TokenizedText*>& texts) const;
    /// Unit rows in the shared space.
    Tensor project_video(const Tensor& raw) const { return proj_video_(raw); }
    Tensor project_text(const Tensor& raw) const { return proj_text_(raw); }

    /// One-element temperature tensor (a parameter when learned).
    const Tensor& sigma() const { return sigma_; }
    /// Keeps a learned temperature above `floor` after an optimizer step.
    void clamp_sigma(float floor = 1e-3F);

    std::size_t video_forwards() const { return video_.forward_count(); }
    std::size_t text_forwards() const { return text_.forward_count(); }
    void reset_forward_counts();

private:
    ModelConfig cfg_;
    video::VideoEncoder video_;
    text::TextEncoder text_;
    ad::ParameterStore own_;
    ad::ParameterStore all_;
    align::Projection proj_video_;
    align::Projection proj_text_;
    Tensor sigma_;
};

}  // namespace stalign::model
