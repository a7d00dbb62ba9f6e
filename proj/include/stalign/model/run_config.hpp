#pragma once

// Everything a training run needs, stored as flat key=value text:
//
//   # comment
//   profile=desk
//   video.embed_dim=64
//
// Unknown keys are rejected; absent keys keep the profile default.

#include <cstdint>
#include <filesystem>
#include <string>

#include "stalign/model/dual_encoder.hpp"

namespace stalign::model {

struct RunConfig {
    std::string profile = "desk";  // desk | paper-shape
    ModelConfig model;
    std::string view_spec = "CINE_lax-sax+LGE_lax-sax-2ch-3ch";
    std::size_t frames = 4;  // M
    std::size_t stride = 1;  // S
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    std::size_t val_every = 10;  // 0 disables validation
    std::size_t vocab_min_count = 2;
    std::string corpus;

    static RunConfig desk();
    /// Published layer sizes and Table-style optimizer settings; shape-checked only.
    static RunConfig paper_shape();
    static RunConfig for_profile(const std::string& profile);

    /// Throws ConfigError on any invalid field.
    void validate() const;

    std::string to_text() const;
    /// Throws ConfigError naming the line on bad input.
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    bool operator==(const RunConfig& o) const { return to_text() == o.to_text(); }
};

}  // namespace stalign::model
