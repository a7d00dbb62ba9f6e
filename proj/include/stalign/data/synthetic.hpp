#pragma once

// Synthetic paired corpus with a known latent structure.
//
// Each study draws a class k, a blob size and an enhancement extent.
//   CINE lax/sax: a bright blob travels across the frame along angle
//     2*pi*k/n. Classes k and k + n/2 share a path in opposite directions, so
//     only frame order tells them apart. Blob radius encodes size.
//   LGE: a static bright patch at angle 2*pi*k/n + pi/4; its radius encodes
//     extent. Single-image LGE views repeat the patch.
// The impression names the class through two class-specific keywords, states
// size and extent, and mixes in one or two unrelated sentences.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stalign/data/manifest.hpp"

namespace stalign::data {

struct SyntheticOptions {
    std::size_t n_studies = 200;
    std::size_t n_classes = 4;
    std::uint64_t seed = 0;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t cine_frames = 6;
    std::size_t lge_slices = 4;
    double noise = 0.05;
};

/// The two words that name class k in impressions; disjoint across classes.
std::vector<std::string> class_keywords(std::size_t k);

inline const std::vector<std::string> kSizeWords{"small", "moderate", "large"};
inline const std::vector<std::string> kExtentWords{"focal", "extensive"};

/// Throws ContractError unless n_studies >= 2 and n_classes >= 2.
Corpus gen_synthetic_corpus(const SyntheticOptions& opts);
Corpus gen_synthetic_corpus(std::size_t n_studies, std::size_t n_classes, std::uint64_t seed);

}  // namespace stalign::data
