#pragma once

// Exact dot-product retrieval between the two sides of a CorpusIndex.
//
// A query's true match is the gallery row with the same study id. Its rank is
// 1 + (gallery items scoring strictly higher) + (items scoring equal that sit
// earlier in the gallery), i.e. ties go to the lower gallery position.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stalign::eval {

struct CorpusIndex {
    std::size_t dim = 0;
    std::vector<std::string> video_ids;
    std::vector<float> video;  // v x dim, unit rows
    std::vector<std::string> text_ids;
    std::vector<float> text;  // t x dim, unit rows

    std::size_t videos() const { return video_ids.size(); }
    std::size_t texts() const { return text_ids.size(); }
    const float* video_row(std::size_t i) const { return video.data() + i * dim; }
    const float* text_row(std::size_t i) const { return text.data() + i * dim; }

    /// Throws ContractError on duplicate ids, size mismatch, or a row norm
    /// more than 1e-5 away from 1.
    void validate() const;
    bool operator==(const CorpusIndex&) const = default;
};

enum class Direction { TextToVideo, VideoToText };
std::string to_string(Direction d);

/// Ranks over raw rows (no norm check): query q's true match is gallery row
/// truth[q].
std::vector<std::size_t> match_ranks(const float* queries, std::size_t n_queries, const float* gallery,
                                     std::size_t n_gallery, std::size_t dim, const std::vector<std::size_t>& truth);

/// 1-based rank of the true match for every query on the query side.
std::vector<std::size_t> true_match_ranks(const CorpusIndex& index, Direction dir);

/// Fraction of queries whose true match ranks within K.
double recall_at_k(const CorpusIndex& index, Direction dir, std::size_t k);

inline const std::vector<std::size_t> kReportKs{5, 10, 50};

struct RetrievalReport {
    std::map<Direction, std::map<std::size_t, double>> recall;  // fractions
    std::size_t texts = 0;
    std::size_t videos = 0;

    /// Throws ContractError unless both directions hold K = 5, 10 and 50.
    void validate() const;
};

RetrievalReport evaluate_retrieval(const CorpusIndex& index, const std::vector<std::size_t>& ks = kReportKs);

/// Sum of the six recalls (K = 5, 10, 50, both directions) as fractions, in [0, 6].
double rsum(const RetrievalReport& report);
/// Same sum in percentage points, in [0, 600].
inline double rsum_percent(const RetrievalReport& report) { return 100.0 * rsum(report); }

/// JSON-lines embedding dump: {"study_id","modality":"video"|"text","vector":[...]}.
void save_embeddings(const CorpusIndex& index, const std::filesystem::path& path);
/// Throws ParseError with the line number on malformed input.
CorpusIndex load_embeddings(const std::filesystem::path& path);

}  // namespace stalign::eval
