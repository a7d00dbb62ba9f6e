#include "stalign/eval/retrieval.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "stalign/errors.hpp"

namespace stalign::eval {

using nlohmann::json;

namespace {

void check_side(const std::vector<std::string>& ids, const std::vector<float>& rows, std::size_t dim,
                const char* side) {
    if (rows.size() != ids.size() * dim) throw ContractError(std::string("corpus index: ") + side + " rows do not match ids");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!seen.insert(ids[i]).second) throw ContractError(std::string("corpus index: duplicate ") + side + " id " + ids[i]);
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += double(rows[i * dim + j]) * rows[i * dim + j];
        if (std::abs(std::sqrt(s) - 1.0) > 1e-5) {
            throw ContractError(std::string("corpus index: ") + side + " row " + ids[i] + " has norm " +
                                std::to_string(std::sqrt(s)));
        }
    }
}

double dot(const float* a, const float* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += double(a[i]) * b[i];
    return s;
}

}  // namespace

void CorpusIndex::validate() const {
    if (dim == 0) throw ContractError("corpus index: zero embedding width");
    check_side(video_ids, video, dim, "video");
    check_side(text_ids, text, dim, "text");
}

std::string to_string(Direction d) { return d == Direction::TextToVideo ? "t2v" : "v2t"; }

std::vector<std::size_t> match_ranks(const float* queries, std::size_t n_queries, const float* gallery,
                                     std::size_t n_gallery, std::size_t dim, const std::vector<std::size_t>& truth) {
    if (truth.size() != n_queries) throw ShapeError("match_ranks: one truth index per query required");
    std::vector<std::size_t> ranks(n_queries);
    std::vector<double> scores(n_gallery);
    for (std::size_t q = 0; q < n_queries; ++q) {
        if (truth[q] >= n_gallery) throw ContractError("match_ranks: truth index outside the gallery");
        for (std::size_t g = 0; g < n_gallery; ++g) scores[g] = dot(queries + q * dim, gallery + g * dim, dim);
        const double t = scores[truth[q]];
        std::size_t rank = 1;
        for (std::size_t g = 0; g < n_gallery; ++g)
            if (scores[g] > t || (scores[g] == t && g < truth[q])) ++rank;
        ranks[q] = rank;
    }
    return ranks;
}

std::vector<std::size_t> true_match_ranks(const CorpusIndex& index, Direction dir) {
    index.validate();
    const bool t2v = dir == Direction::TextToVideo;
    const auto& q_ids = t2v ? index.text_ids : index.video_ids;
    const auto& g_ids = t2v ? index.video_ids : index.text_ids;
    if (g_ids.empty()) throw ContractError("retrieval: empty gallery");
    std::unordered_map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < g_ids.size(); ++i) where.emplace(g_ids[i], i);
    std::vector<std::size_t> truth(q_ids.size());
    for (std::size_t q = 0; q < q_ids.size(); ++q) {
        const auto it = where.find(q_ids[q]);
        if (it == where.end()) throw ContractError("retrieval: query " + q_ids[q] + " has no match in the gallery");
        truth[q] = it->second;
    }
    const auto& q_rows = t2v ? index.text : index.video;
    const auto& g_rows = t2v ? index.video : index.text;
    return match_ranks(q_rows.data(), q_ids.size(), g_rows.data(), g_ids.size(), index.dim, truth);
}

double recall_at_k(const CorpusIndex& index, Direction dir, std::size_t k) {
    if (k == 0) throw ContractError("recall_at_k: K must be at least 1");
    const auto ranks = true_match_ranks(index, dir);
    if (ranks.empty()) throw ContractError("recall_at_k: no queries");
    std::size_t hit = 0;
    for (std::size_t r : ranks) hit += r <= k;
    return static_cast<double>(hit) / static_cast<double>(ranks.size());
}

void RetrievalReport::validate() const {
    for (Direction d : {Direction::TextToVideo, Direction::VideoToText}) {
        const auto it = recall.find(d);
        for (std::size_t k : kReportKs) {
            if (it == recall.end() || !it->second.count(k)) {
                throw ContractError("retrieval report lacks " + to_string(d) + " R@" + std::to_string(k));
            }
        }
    }
}

RetrievalReport evaluate_retrieval(const CorpusIndex& index, const std::vector<std::size_t>& ks) {
    RetrievalReport r;
    r.texts = index.texts();
    r.videos = index.videos();
    for (Direction d : {Direction::TextToVideo, Direction::VideoToText}) {
        const auto ranks = true_match_ranks(index, d);
        if (ranks.empty()) throw ContractError("retrieval: no queries");
        for (std::size_t k : ks) {
            if (k == 0) throw ContractError("retrieval: K must be at least 1");
            std::size_t hit = 0;
            for (std::size_t rank : ranks) hit += rank <= k;
            r.recall[d][k] = static_cast<double>(hit) / static_cast<double>(ranks.size());
        }
    }
    return r;
}

double rsum(const RetrievalReport& report) {
    report.validate();
    double s = 0.0;
    for (Direction d : {Direction::TextToVideo, Direction::VideoToText})
        for (std::size_t k : kReportKs) s += report.recall.at(d).at(k);
    return s;
}

void save_embeddings(const CorpusIndex& index, const std::filesystem::path& path) {
    index.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    auto emit = [&](const std::string& id, const char* modality, const float* row) {
        out << json{{"study_id", id}, {"modality", modality}, {"vector", std::vector<float>(row, row + index.dim)}}.dump()
            << '\n';
    };
    for (std::size_t i = 0; i < index.videos(); ++i) emit(index.video_ids[i], "video", index.video_row(i));
    for (std::size_t i = 0; i < index.texts(); ++i) emit(index.text_ids[i], "text", index.text_row(i));
    if (!out) throw IoError("write failed for " + path.string());
}

CorpusIndex load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CorpusIndex index;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fail = [&](const std::string& why) {
            return ParseError(path.string() + ":" + std::to_string(lineno) + ": " + why);
        };
        try {
            const json j = json::parse(line);
            const auto id = j.at("study_id").get<std::string>();
            const auto modality = j.at("modality").get<std::string>();
            const auto vec = j.at("vector").get<std::vector<float>>();
            if (index.dim == 0) index.dim = vec.size();
            if (vec.empty() || vec.size() != index.dim) throw fail("vector width differs from earlier rows");
            if (modality == "video") {
                index.video_ids.push_back(id);
                index.video.insert(index.video.end(), vec.begin(), vec.end());
            } else if (modality == "text") {
                index.text_ids.push_back(id);
                index.text.insert(index.text.end(), vec.begin(), vec.end());
            } else {
                throw fail("unknown modality '" + modality + "'");
            }
        } catch (const json::exception& e) {
            throw fail(e.what());
        }
    }
    try {
        index.validate();
    } catch (const ContractError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return index;
}

}  // namespace stalign::eval
