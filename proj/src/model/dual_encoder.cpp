#include "stalign/model/dual_encoder.hpp"

#include "stalign/errors.hpp"
#include "stalign/util/rng.hpp"

namespace stalign::model {

void ModelConfig::validate() const {
    video.validate();
    text.validate();
    if (proj_dim == 0) throw ConfigError("model config: proj_dim must be positive");
    if (!(sigma > 0.0)) throw ConfigError("model config: sigma must be positive");
}

namespace {
const ModelConfig& checked(const ModelConfig& c) {
    c.validate();
    return c;
}
}  // namespace

DualEncoder::DualEncoder(const ModelConfig& cfg, std::size_t vocab_size, std::uint64_t seed)
    : cfg_(checked(cfg)), video_(cfg.video, seed), text_(cfg.text, vocab_size, seed) {
    Rng rng(mix_seed(seed, "proj"));
    proj_video_ = align::Projection(own_, "proj.video", cfg_.video.embed_dim, cfg_.proj_dim, rng);
    proj_text_ = align::Projection(own_, "proj.text", cfg_.text.embed_dim, cfg_.proj_dim, rng);
    if (cfg_.learn_sigma) {
        sigma_ = own_.add_constant("align.sigma", {1}, static_cast<float>(cfg_.sigma));
    } else {
        sigma_ = Tensor::full({1}, static_cast<float>(cfg_.sigma));
    }
    all_.merge(video_.parameters());
    all_.merge(text_.parameters());
    all_.merge(own_);
}

Tensor DualEncoder::encode_videos(const std::vector<const video::VideoTensor*>& clips) const {
    if (clips.empty()) throw ContractError("encode_videos: no clips");
    std::vector<Tensor> rows;
    rows.reserve(clips.size());
    for (const auto* c : clips) rows.push_back(video_.encode(*c));
    return rows.size() == 1 ? rows.front() : ad::concat<float>(rows, 0);
}

Tensor DualEncoder::encode_texts(const std::vector<const text::TokenizedText*>& texts) const {
    if (texts.empty()) throw ContractError("encode_texts: no texts");
    std::vector<Tensor> rows;
    rows.reserve(texts.size());
    for (const auto* t : texts) rows.push_back(text_.encode(*t));
    return rows.size() == 1 ? rows.front() : ad::concat<float>(rows, 0);
}

void DualEncoder::reset_forward_counts() {
    video_.reset_forward_count();
    text_.reset_forward_count();
}

void DualEncoder::clamp_sigma(float floor) {
    if (!cfg_.learn_sigma) return;
    auto v = sigma_.mutable_values();
    if (v[0] < floor) v[0] = floor;
}

}  // namespace stalign::model
