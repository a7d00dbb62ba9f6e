#pragma once

// Corpus -> model-ready inputs, and model -> retrieval index.

#include <map>
#include <string>
#include <vector>

#include "stalign/data/assembly.hpp"
#include "stalign/data/manifest.hpp"
#include "stalign/eval/retrieval.hpp"
#include "stalign/model/dual_encoder.hpp"
#include "stalign/text/tokenizer.hpp"

namespace stalign::model {

struct PreparedStudy {
    std::string study_id;
    video::VideoTensor video;    // all L assembled frames
    text::TokenizedText text;    // trimmed
    std::string impression;
    std::map<std::string, int> labels;
};

struct PreparedCorpus {
    std::vector<PreparedStudy> studies;
    /// One message per study dropped for a missing (type, view) pair.
    std::vector<std::string> excluded;
};

/// Assembles and tokenizes the listed studies (all when `indices` is empty).
/// Studies lacking a requested series are excluded, not fatal.
PreparedCorpus prepare_corpus(const data::Corpus& corpus, const std::vector<std::size_t>& indices,
                              const data::ViewSpec& spec, const text::Vocabulary& vocab,
                              std::size_t max_len, const data::AssemblyOptions& opts = {});

/// Vocabulary over the impressions of the listed studies.
text::Vocabulary build_vocabulary(const data::Corpus& corpus, const std::vector<std::size_t>& indices,
                                  std::size_t min_count);

/// Video side: mean over the inference offsets of projected unit clip
/// embeddings, renormalized. Text side: one pass per study. Throws
/// ContractError if the encoders ran anything other than t + v*offsets passes.
eval::CorpusIndex embed_corpus(DualEncoder& model, const std::vector<PreparedStudy>& studies, std::size_t frames,
                               std::size_t stride);

}  // namespace stalign::model
