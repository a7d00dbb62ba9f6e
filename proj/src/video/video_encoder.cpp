#include "stalign/video/video_encoder.hpp"

#include <string>

#include "stalign/errors.hpp"

namespace stalign::video {

void SpaceTimeConfig::validate() const {
    if (patch_size == 0 || embed_dim == 0 || num_blocks == 0 || num_heads == 0 || max_frames == 0 ||
        height == 0 || width == 0 || mlp_ratio == 0) {
        throw ConfigError("space-time config: every size must be positive");
    }
    if (height % patch_size != 0 || width % patch_size != 0) {
        throw ConfigError("space-time config: resolution " + std::to_string(height) + "x" + std::to_string(width) +
                          " not divisible by patch size " + std::to_string(patch_size));
    }
    if (embed_dim % num_heads != 0) {
        throw ConfigError("space-time config: embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                          std::to_string(num_heads) + " heads");
    }
}

SpaceTimeConfig SpaceTimeConfig::paper() {
    SpaceTimeConfig c;
    c.patch_size = 16;
    c.embed_dim = 768;
    c.num_blocks = 12;
    c.num_heads = 12;
    c.max_frames = 64;
    c.height = 224;
    c.width = 224;
    return c;
}

VideoTensor VideoTensor::select_frames(const std::vector<std::size_t>& indices) const {
    VideoTensor out;
    out.frames = indices.size();
    out.height = height;
    out.width = width;
    out.values.reserve(indices.size() * frame_stride());
    for (std::size_t i : indices) {
        if (i >= frames) {
            throw ContractError("select_frames: index " + std::to_string(i) + " out of range for " +
                                std::to_string(frames) + " frames");
        }
        const auto first = values.begin() + static_cast<std::ptrdiff_t>(i * frame_stride());
        out.values.insert(out.values.end(), first, first + static_cast<std::ptrdiff_t>(frame_stride()));
    }
    return out;
}

std::size_t TokenGrid::frame_index(std::size_t row) const {
    const std::size_t base = has_cls ? 1 : 0;
    if (row < base || row >= token_count()) throw ContractError("token grid: row " + std::to_string(row) + " is not a patch");
    return (row - base) / patches_per_frame;
}

std::size_t TokenGrid::patch_index(std::size_t row) const {
    const std::size_t base = has_cls ? 1 : 0;
    if (row < base || row >= token_count()) throw ContractError("token grid: row " + std::to_string(row) + " is not a patch");
    return (row - base) % patches_per_frame;
}

VideoEncoder::VideoEncoder(const SpaceTimeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(seed, "video"));
    const std::size_t d = cfg_.embed_dim;
    const std::size_t patch_len = VideoTensor::kChannels * cfg_.patch_size * cfg_.patch_size;
    patch_embed_ = nn::Linear::create(store_, "video.patch_embed", patch_len, d, rng);
    pos_.spatial = store_.add_normal("video.pos.spatial", {cfg_.max_patches(), d}, 0.02, rng);
    pos_.temporal = store_.add_zeros("video.pos.temporal", {cfg_.max_frames, d});
    pos_.cls = store_.add_normal("video.pos.cls", {1, d}, 0.02, rng);
    for (std::size_t b = 0; b < cfg_.num_blocks; ++b) {
        const std::string p = "video.blocks." + std::to_string(b);
        SpaceTimeBlock blk;
        blk.norm_temporal = nn::LayerNorm::create(store_, p + ".norm_temporal", d);
        blk.temporal = nn::SelfAttention::create(store_, p + ".temporal", d, cfg_.num_heads, rng, true);
        blk.norm_spatial = nn::LayerNorm::create(store_, p + ".norm_spatial", d);
        blk.spatial = nn::SelfAttention::create(store_, p + ".spatial", d, cfg_.num_heads, rng);
        blk.norm_mlp = nn::LayerNorm::create(store_, p + ".norm_mlp", d);
        blk.mlp = nn::Mlp::create(store_, p + ".mlp", d, d * cfg_.mlp_ratio, rng);
        blocks_.push_back(std::move(blk));
    }
    final_norm_ = nn::LayerNorm::create(store_, "video.final_norm", d);
}

TokenGrid VideoEncoder::patchify(const VideoTensor& video) const {
    const std::size_t P = cfg_.patch_size;
    if (video.height == 0 || video.width == 0 || video.height % P != 0 || video.width % P != 0) {
        throw ShapeError("patchify: frame " + std::to_string(video.height) + "x" + std::to_string(video.width) +
                         " (H x W) is not divisible by patch size P=" + std::to_string(P));
    }
    if (video.frames == 0) throw ContractError("patchify: video has no frames");
    if (video.frames > cfg_.max_frames) {
        throw CapacityError("patchify: " + std::to_string(video.frames) + " frames exceed max_frames " +
                            std::to_string(cfg_.max_frames));
    }
    if (video.values.size() != video.frames * video.frame_stride()) {
        throw ShapeError("patchify: video holds " + std::to_string(video.values.size()) + " values, expected " +
                         std::to_string(video.frames * video.frame_stride()));
    }
    const std::size_t gh = video.height / P, gw = video.width / P, n = gh * gw;
    if (n > cfg_.max_patches()) {
        throw CapacityError("patchify: " + std::to_string(n) + " patches per frame exceed max_patches " +
                            std::to_string(cfg_.max_patches()));
    }
    const std::size_t C = VideoTensor::kChannels;
    const std::size_t patch_len = C * P * P;
    std::vector<float> raw(video.frames * n * patch_len);
    std::size_t o = 0;
    for (std::size_t m = 0; m < video.frames; ++m) {
        const float* frame = video.values.data() + m * video.frame_stride();
        for (std::size_t py = 0; py < gh; ++py) {
            for (std::size_t px = 0; px < gw; ++px) {
                // Flattened as (channel, row, col), matching a conv kernel layout.
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t y = 0; y < P; ++y)
                        for (std::size_t x = 0; x < P; ++x)
                            raw[o++] = frame[(c * video.height + py * P + y) * video.width + px * P + x];
            }
        }
    }
    TokenGrid grid;
    grid.frames = video.frames;
    grid.patches_per_frame = n;
    grid.has_cls = false;
    grid.tokens = patch_embed_(Tensor::from({video.frames * n, patch_len}, std::move(raw)));
    return grid;
}

TokenGrid VideoEncoder::add_positional(const TokenGrid& grid) const {
    if (grid.has_cls) throw ContractError("add_positional: grid already carries [CLS]");
    if (grid.frames > cfg_.max_frames || grid.patches_per_frame > cfg_.max_patches()) {
        throw CapacityError("add_positional: grid exceeds positional capacity");
    }
    const std::size_t rows = grid.frames * grid.patches_per_frame;
    std::vector<std::size_t> patch_ids(rows), frame_ids(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        frame_ids[r] = r / grid.patches_per_frame;
        patch_ids[r] = r % grid.patches_per_frame;
    }
    auto es = ad::row_mix(pos_.spatial, ad::RowMix::gather(patch_ids));
    auto et = ad::row_mix(pos_.temporal, ad::RowMix::gather(frame_ids));
    auto patches = ad::add(grid.tokens, ad::add(es, et));
    const std::vector<Tensor> parts{pos_.cls, patches};
    TokenGrid out = grid;
    out.has_cls = true;
    out.tokens = ad::concat<float>(parts, 0);
    return out;
}

TokenGrid VideoEncoder::space_time_block(const TokenGrid& grid, const SpaceTimeBlock& block,
                                         nn::ForwardTrace* trace) const {
    if (!grid.has_cls) throw ContractError("space_time_block: grid lacks [CLS]");
    const std::size_t M = grid.frames, N = grid.patches_per_frame;
    const std::size_t total = grid.token_count();
    const Tensor& z = grid.tokens;

    // Temporal: gather patches position-major so each group is one patch across frames.
    std::vector<std::size_t> by_position;
    by_position.reserve(M * N);
    for (std::size_t p = 0; p < N; ++p)
        for (std::size_t m = 0; m < M; ++m) by_position.push_back(grid.row_of(m, p));
    auto t_in = ad::row_mix(block.norm_temporal(z), ad::RowMix::gather(by_position));
    auto t_out = block.temporal(t_in, M, {}, trace, "temporal");
    ad::RowMix t_back;
    t_back.rows.resize(total);  // [CLS] row receives nothing
    for (std::size_t i = 0; i < by_position.size(); ++i) t_back.rows[by_position[i]].push_back({i, 1.0});
    auto u = ad::add(z, ad::row_mix(t_out, t_back));

    // Spatial: one group per frame, [CLS] replicated at the head of each group.
    std::vector<std::size_t> by_frame;
    by_frame.reserve(M * (N + 1));
    for (std::size_t m = 0; m < M; ++m) {
        by_frame.push_back(0);
        for (std::size_t p = 0; p < N; ++p) by_frame.push_back(grid.row_of(m, p));
    }
    auto s_in = ad::row_mix(block.norm_spatial(u), ad::RowMix::gather(by_frame));
    auto s_out = block.spatial(s_in, N + 1, {}, trace, "spatial");
    ad::RowMix s_back;
    s_back.rows.resize(total);
    const double inv_m = 1.0 / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) {
        s_back.rows[0].push_back({m * (N + 1), inv_m});
        for (std::size_t p = 0; p < N; ++p) s_back.rows[grid.row_of(m, p)].push_back({m * (N + 1) + 1 + p, 1.0});
    }
    auto w = ad::add(z, ad::row_mix(s_out, s_back));

    TokenGrid out = grid;
    out.tokens = ad::add(w, block.mlp(block.norm_mlp(w)));
    if (trace != nullptr) trace->block_outputs.push_back(out.tokens);
    return out;
}

Tensor VideoEncoder::encode(const VideoTensor& video, nn::ForwardTrace* trace) const {
    TokenGrid grid = add_positional(patchify(video));
    for (const auto& blk : blocks_) grid = space_time_block(grid, blk, trace);
    forward_count_.fetch_add(1);
    const std::size_t cls_row = 0;
    auto cls = ad::row_mix(grid.tokens, ad::RowMix::gather(std::span<const std::size_t>(&cls_row, 1)));
    return final_norm_(cls);
}

}  // namespace stalign::video
