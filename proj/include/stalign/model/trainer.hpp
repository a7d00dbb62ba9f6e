#pragma once

// Contrastive training loop. One epoch shuffles the training studies, cuts
// them into batches of batch_size (a trailing batch of one is dropped), draws
// a fresh segment sample per clip, and takes one Adam step per batch.

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "stalign/align/alignment.hpp"
#include "stalign/data/manifest.hpp"
#include "stalign/model/pipeline.hpp"
#include "stalign/model/run_config.hpp"

namespace stalign::model {

struct StepRecord {
    std::size_t step = 0;
    align::LossBreakdown loss;
    double sigma = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::size_t step = 0;   // global step count at epoch end
    align::LossBreakdown loss;  // mean over the epoch's steps
    double sigma = 0.0;
    std::optional<double> val_rsum;  // percent
};

std::string to_json_line(const StepRecord& r);
std::string to_json_line(const EpochRecord& r);

struct TrainResult {
    std::unique_ptr<DualEncoder> model;
    text::Vocabulary vocab;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
    std::vector<std::string> excluded;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::optional<double> best_val_rsum;
    std::size_t best_epoch = 0;
    std::size_t duplicate_text_batches = 0;
};

struct TrainOptions {
    /// When set: config.txt, vocab.txt, steps.jsonl, metrics.jsonl,
    /// final.ckpt and best.ckpt (if validation ran) are written here.
    std::optional<std::filesystem::path> out_dir;
    std::ostream* log = nullptr;  // epoch JSON lines and warnings
};

/// Splits the corpus by hash, builds the vocabulary on the training side,
/// constructs the model from cfg.seed and trains. Throws DataError when every
/// training study is excluded.
TrainResult train(const RunConfig& cfg, const data::Corpus& corpus, const TrainOptions& opts = {});

/// The untrained model train() would start from.
std::unique_ptr<DualEncoder> initial_model(const RunConfig& cfg, std::size_t vocab_size);

}  // namespace stalign::model
