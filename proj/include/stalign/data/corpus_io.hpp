#pragma once

// On-disk corpus layout (a directory):
//
//   corpus.jsonl   line 1: {"format":"stalign-corpus","version":1,"studies":N}
//                  then one study per line:
//                  {"study_id", "impression", "labels":{name:int},
//                   "series":[{"image_type","view","frames_file","frame_count","h","w"}]}
//   frames/<study>_<TYPE>_<view>.stfr
//                  "STFR", u32 count, u32 h, u32 w, count*h*w little-endian f32
//   labels.jsonl   {"study_id", "labels"} per study (written by save_corpus)

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stalign/data/manifest.hpp"

namespace stalign::data {

inline constexpr int kCorpusVersion = 1;

/// Writes the directory, creating it if needed. Throws IoError.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
/// Throws ParseError (with line or byte offset) on malformed or truncated
/// input and on a version mismatch; nothing is returned on failure.
Corpus load_corpus(const std::filesystem::path& dir);

void write_frames_file(const Series& s, const std::filesystem::path& path);
/// Fills count/height/width/pixels of `s`.
void read_frames_file(const std::filesystem::path& path, Series& s);

/// Study ids to label maps, as written in labels.jsonl.
std::map<std::string, std::map<std::string, int>> load_labels(const std::filesystem::path& path);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Orders studies by FNV-1a hash of the id (id as tie-break) and assigns the
/// first round(fraction * n) to train. Index lists come back sorted.
Split split_by_hash(const Corpus& corpus, double train_fraction);
Split split_by_hash(const std::vector<std::string>& ids, double train_fraction);

struct CorpusStats {
    std::size_t studies = 0;
    std::map<std::string, std::map<int, std::size_t>> label_counts;
    std::map<std::string, std::size_t> series_counts;  // "CINE_sax" -> studies having it
    /// Impression lengths in words, bucketed by `bucket_width`.
    std::size_t bucket_width = 10;
    std::map<std::size_t, std::size_t> impression_length_histogram;  // bucket start -> count
    double mean_impression_words = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus, std::size_t bucket_width = 10);

}  // namespace stalign::data
