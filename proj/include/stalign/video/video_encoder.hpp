#pragma once

// Space-time transformer over video clips.
//
// Tokens are laid out frame-major: row 0 is [CLS], row 1 + m*N + p is patch p
// of frame m. Each block runs temporal attention (per patch position, across
// frames, [CLS] excluded), then spatial attention (per frame over [CLS] plus
// that frame's patches, the M per-frame [CLS] outputs averaged back), then an
// MLP. The block input is the only residual carried past the temporal step:
//
//   u = z + TemporalAttn(LN(z))
//   w = z + SpatialAttn(LN(u))
//   out = w + MLP(LN(w))

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "stalign/autodiff/parameters.hpp"
#include "stalign/nn/layers.hpp"

namespace stalign::video {

using ad::Tensor;

struct SpaceTimeConfig {
    std::size_t patch_size = 8;
    std::size_t embed_dim = 64;
    std::size_t num_blocks = 2;
    std::size_t num_heads = 4;
    std::size_t max_frames = 64;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t mlp_ratio = 4;

    /// N_max = H*W / P^2.
    std::size_t max_patches() const { return (height / patch_size) * (width / patch_size); }
    /// Throws ConfigError on any violated invariant.
    void validate() const;

    /// 224x224, P=16, d=768, 12 blocks, 12 heads.
    static SpaceTimeConfig paper();
    static SpaceTimeConfig desk() { return {}; }
};

/// Clip of M frames, 3 channels, row-major [M][3][H][W].
struct VideoTensor {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    static constexpr std::size_t kChannels = 3;
    std::size_t frame_stride() const { return kChannels * height * width; }
    /// Copy of the listed frames, in order (repeats allowed).
    VideoTensor select_frames(const std::vector<std::size_t>& indices) const;
};

struct TokenGrid {
    Tensor tokens;  // [(has_cls ? 1 : 0) + M*N, d]
    std::size_t frames = 0;
    std::size_t patches_per_frame = 0;
    bool has_cls = false;

    std::size_t token_count() const { return (has_cls ? 1 : 0) + frames * patches_per_frame; }
    std::size_t row_of(std::size_t frame, std::size_t patch) const {
        return (has_cls ? 1 : 0) + frame * patches_per_frame + patch;
    }
    std::size_t frame_index(std::size_t row) const;
    std::size_t patch_index(std::size_t row) const;
};

struct PositionalState {
    Tensor spatial;   // [N_max, d]
    Tensor temporal;  // [M_max, d], zeros at init
    Tensor cls;       // [1, d]
};

struct SpaceTimeBlock {
    nn::LayerNorm norm_temporal;
    nn::SelfAttention temporal;  // output projection starts at zero
    nn::LayerNorm norm_spatial;
    nn::SelfAttention spatial;
    nn::LayerNorm norm_mlp;
    nn::Mlp mlp;
};

class VideoEncoder {
public:
    /// Registers parameters as "video.*" in its own store.
    VideoEncoder(const SpaceTimeConfig& cfg, std::uint64_t seed);

    const SpaceTimeConfig& config() const { return cfg_; }
    ad::ParameterStore& parameters() { return store_; }
    const ad::ParameterStore& parameters() const { return store_; }
    const PositionalState& positional() const { return pos_; }
    const std::vector<SpaceTimeBlock>& blocks() const { return blocks_; }

    /// Linear patch embedding (equivalent to a conv with kernel = stride = P).
    TokenGrid patchify(const VideoTensor& video) const;
    /// Adds E^s_p + E^t_m to every patch and prepends [CLS].
    TokenGrid add_positional(const TokenGrid& grid) const;
    TokenGrid space_time_block(const TokenGrid& grid, const SpaceTimeBlock& block,
                               nn::ForwardTrace* trace = nullptr) const;
    /// Final-layer [CLS] row after the closing layer norm, shape [1, d].
    Tensor encode(const VideoTensor& video, nn::ForwardTrace* trace = nullptr) const;

    std::size_t forward_count() const { return forward_count_.load(); }
    void reset_forward_count() { forward_count_.store(0); }

private:
    SpaceTimeConfig cfg_;
    ad::ParameterStore store_;
    nn::Linear patch_embed_;
    PositionalState pos_;
    std::vector<SpaceTimeBlock> blocks_;
    nn::LayerNorm final_norm_;
    mutable std::atomic<std::size_t> forward_count_{0};
};

}  // namespace stalign::video
