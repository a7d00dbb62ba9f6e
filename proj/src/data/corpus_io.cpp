#include "stalign/data/corpus_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stalign/errors.hpp"
#include "stalign/util/rng.hpp"

namespace stalign::data {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "frame files assume a little-endian host");

namespace {

std::string frames_name(const std::string& id, const Series& s) {
    return id + "_" + to_string(s.image_type) + "_" + to_string(s.view) + ".stfr";
}

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

}  // namespace

void write_frames_file(const Series& s, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("STFR", 4);
    put_u32(out, static_cast<std::uint32_t>(s.count));
    put_u32(out, static_cast<std::uint32_t>(s.height));
    put_u32(out, static_cast<std::uint32_t>(s.width));
    out.write(reinterpret_cast<const char*>(s.pixels.data()), static_cast<std::streamsize>(s.pixels.size() * 4));
    if (!out) throw IoError("write failed for " + path.string());
}

void read_frames_file(const fs::path& path, Series& s) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16) throw ParseError(path.string() + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), "STFR", 4) != 0) throw ParseError(path.string() + ": bad magic at offset 0");
    std::uint32_t dims[3];
    std::memcpy(dims, bytes.data() + 4, 12);
    const std::size_t n = std::size_t{dims[0]} * dims[1] * dims[2];
    if (bytes.size() != 16 + n * 4) {
        throw ParseError(path.string() + ": payload ends at offset " + std::to_string(bytes.size()) + ", expected " +
                         std::to_string(16 + n * 4));
    }
    s.count = dims[0];
    s.height = dims[1];
    s.width = dims[2];
    s.pixels.resize(n);
    std::memcpy(s.pixels.data(), bytes.data() + 16, n * 4);
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
    validate_corpus(corpus);
    std::error_code ec;
    fs::create_directories(dir / "frames", ec);
    if (ec) throw IoError("cannot create " + (dir / "frames").string() + ": " + ec.message());

    std::ofstream out(dir / "corpus.jsonl", std::ios::trunc);
    std::ofstream labels(dir / "labels.jsonl", std::ios::trunc);
    if (!out || !labels) throw IoError("cannot write corpus files in " + dir.string());
    out << json{{"format", "stalign-corpus"}, {"version", kCorpusVersion}, {"studies", corpus.size()}}.dump() << '\n';
    for (const auto& m : corpus) {
        json series = json::array();
        for (const auto& s : m.series) {
            const std::string name = frames_name(m.study_id, s);
            write_frames_file(s, dir / "frames" / name);
            series.push_back({{"image_type", to_string(s.image_type)},
                              {"view", to_string(s.view)},
                              {"frames_file", "frames/" + name},
                              {"frame_count", s.count},
                              {"h", s.height},
                              {"w", s.width}});
        }
        out << json{{"study_id", m.study_id}, {"impression", m.impression}, {"labels", m.labels}, {"series", series}}.dump()
            << '\n';
        labels << json{{"study_id", m.study_id}, {"labels", m.labels}}.dump() << '\n';
    }
    if (!out || !labels) throw IoError("write failed in " + dir.string());
}

Corpus load_corpus(const fs::path& dir) {
    const fs::path path = dir / "corpus.jsonl";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };

    if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing header line");
    ++lineno;
    std::size_t expected = 0;
    try {
        const json header = json::parse(line);
        expected = header.at("studies").get<std::size_t>();
        if (header.value("format", "") != "stalign-corpus") throw fail("not a corpus file");
        if (header.value("version", -1) != kCorpusVersion) {
            throw fail("unsupported corpus version " + header.value("version", json(nullptr)).dump() + " (expected " +
                       std::to_string(kCorpusVersion) + ")");
        }
    } catch (const json::exception& e) {
        throw fail(std::string("bad header: ") + e.what());
    }

    Corpus corpus;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        StudyManifest m;
        try {
            const json j = json::parse(line);
            m.study_id = j.at("study_id").get<std::string>();
            m.impression = j.at("impression").get<std::string>();
            m.labels = j.at("labels").get<std::map<std::string, int>>();
            for (const auto& sj : j.at("series")) {
                Series s;
                s.image_type = parse_image_type(sj.at("image_type").get<std::string>());
                s.view = parse_view(sj.at("view").get<std::string>());
                read_frames_file(dir / sj.at("frames_file").get<std::string>(), s);
                if (s.count != sj.at("frame_count").get<std::size_t>() || s.height != sj.at("h").get<std::size_t>() ||
                    s.width != sj.at("w").get<std::size_t>()) {
                    throw fail("frame file dimensions disagree with the manifest for " + m.study_id);
                }
                m.series.push_back(std::move(s));
            }
        } catch (const json::exception& e) {
            throw fail(e.what());
        } catch (const ConfigError& e) {
            throw fail(e.what());
        }
        corpus.push_back(std::move(m));
    }
    if (!in.eof()) throw IoError("read failed for " + path.string());
    if (corpus.size() != expected) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": file ends after " +
                         std::to_string(corpus.size()) + " of " + std::to_string(expected) + " studies");
    }
    try {
        validate_corpus(corpus);
    } catch (const DataError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return corpus;
}

std::map<std::string, std::map<std::string, int>> load_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::map<std::string, int>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            out[j.at("study_id").get<std::string>()] = j.at("labels").get<std::map<std::string, int>>();
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

Split split_by_hash(const std::vector<std::string>& ids, double train_fraction) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("split fraction must lie in [0, 1]");
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ha = fnv1a64(ids[a]), hb = fnv1a64(ids[b]);
        return ha != hb ? ha < hb : ids[a] < ids[b];
    });
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Split split_by_hash(const Corpus& corpus, double train_fraction) {
    std::vector<std::string> ids;
    ids.reserve(corpus.size());
    for (const auto& m : corpus) ids.push_back(m.study_id);
    return split_by_hash(ids, train_fraction);
}

CorpusStats corpus_stats(const Corpus& corpus, std::size_t bucket_width) {
    if (bucket_width == 0) throw ConfigError("histogram bucket width must be positive");
    CorpusStats st;
    st.studies = corpus.size();
    st.bucket_width = bucket_width;
    double words = 0.0;
    for (const auto& m : corpus) {
        for (const auto& [name, value] : m.labels) ++st.label_counts[name][value];
        for (const auto& s : m.series) ++st.series_counts[to_string(s.image_type) + "_" + to_string(s.view)];
        std::istringstream ws(m.impression);
        std::size_t n = 0;
        for (std::string w; ws >> w;) ++n;
        ++st.impression_length_histogram[n / bucket_width * bucket_width];
        words += static_cast<double>(n);
    }
    st.mean_impression_words = corpus.empty() ? 0.0 : words / static_cast<double>(corpus.size());
    return st;
}

}  // namespace stalign::data
