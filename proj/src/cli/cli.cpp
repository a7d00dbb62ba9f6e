#include "stalign/cli/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "stalign/autodiff/checkpoint.hpp"
#include "stalign/data/corpus_io.hpp"
#include "stalign/data/synthetic.hpp"
#include "stalign/errors.hpp"
#include "stalign/eval/probe.hpp"
#include "stalign/eval/retrieval.hpp"
#include "stalign/model/pipeline.hpp"
#include "stalign/model/trainer.hpp"

namespace stalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Exclusive "<target>.lock" file held for the lifetime of a writer.
class OutputLock {
public:
    explicit OutputLock(const fs::path& target) {
        fs::path t = target;
        if (t.has_filename() == false) t = t.parent_path();
        path_ = t.string() + ".lock";
        if (!t.parent_path().empty()) {
            std::error_code ec;
            fs::create_directories(t.parent_path(), ec);
        }
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) throw IoError(target.string() + " is locked by another writer (" + path_.string() + ")");
            throw IoError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~OutputLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

json recall_json(const eval::RetrievalReport& r) {
    json j;
    for (const auto& [dir, by_k] : r.recall) {
        json d;
        for (const auto& [k, v] : by_k) d["r" + std::to_string(k)] = 100.0 * v;
        j[eval::to_string(dir)] = d;
    }
    j["rsum"] = eval::rsum_percent(r);
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
    std::size_t n = 200;
    std::size_t classes = 4;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
    OutputLock lock(a.out);
    data::SyntheticOptions o;
    o.n_studies = a.n;
    o.n_classes = a.classes;
    o.seed = a.seed;
    const auto corpus = data::gen_synthetic_corpus(o);
    data::save_corpus(corpus, a.out);
    const auto st = data::corpus_stats(corpus);
    json counts = json::object();
    for (const auto& [value, n] : st.label_counts.at("class")) counts[std::to_string(value)] = n;
    out << json{{"studies", corpus.size()}, {"class_counts", counts}, {"out", a.out}}.dump() << '\n';
    return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string out;
    std::string corpus;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    auto cfg = model::RunConfig::load(a.config);
    if (!a.corpus.empty()) cfg.corpus = a.corpus;
    if (a.seed) cfg.seed = *a.seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (cfg.corpus.empty()) throw ConfigError("no corpus: set corpus= in the config or pass --corpus");
    cfg.validate();
    OutputLock lock(a.out);
    const auto corpus = data::load_corpus(cfg.corpus);
    model::TrainOptions opts{fs::path(a.out), &err};
    const auto res = model::train(cfg, corpus, opts);
    json summary{{"epochs", res.epochs.size()},
                 {"steps", res.steps.size()},
                 {"first_epoch_total", res.epochs.front().loss.total},
                 {"final_epoch_total", res.epochs.back().loss.total},
                 {"excluded", res.excluded.size()},
                 {"best_val_rsum", res.best_val_rsum ? json(*res.best_val_rsum) : json(nullptr)},
                 {"best_epoch", res.best_epoch},
                 {"out", a.out}};
    out << summary.dump() << '\n';
    return kExitOk;
}

// ---- embed -----------------------------------------------------------------

struct EmbedArgs {
    std::string checkpoint;
    std::string corpus;
    std::optional<std::size_t> frames;
    std::optional<std::size_t> stride;
    std::string out;
    std::string subset = "all";
    bool untrained = false;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out, std::ostream& err) {
    const fs::path ckpt = a.checkpoint;
    const fs::path run_dir = fs::is_directory(ckpt) ? ckpt : ckpt.parent_path();
    const fs::path weights = fs::is_directory(ckpt) ? ckpt / "final.ckpt" : ckpt;
    const auto cfg = model::RunConfig::load(run_dir / "config.txt");
    cfg.validate();
    const auto vocab = text::Vocabulary::load(run_dir / "vocab.txt");
    const std::size_t frames = a.frames.value_or(cfg.frames);
    const std::size_t stride = a.stride.value_or(cfg.stride);
    if (frames > cfg.model.video.max_frames)
        throw ConfigError("--frames " + std::to_string(frames) + " exceeds video.max_frames");

    auto model = model::initial_model(cfg, vocab.size());
    if (!a.untrained) {
        try {
            ad::load_checkpoint(model->parameters(), weights);
        } catch (const ad::CheckpointError& e) {
            throw DataError(std::string("checkpoint does not match config: ") + e.what());
        }
    }

    const auto corpus = data::load_corpus(a.corpus.empty() ? cfg.corpus : a.corpus);
    std::vector<std::size_t> indices;
    if (a.subset != "all") {
        const auto split = data::split_by_hash(corpus, cfg.train_fraction);
        indices = a.subset == "train" ? split.train : split.test;
        if (indices.empty()) throw DataError("subset '" + a.subset + "' is empty");
    }
    const auto prepared = model::prepare_corpus(corpus, indices, data::ViewSpec::parse(cfg.view_spec), vocab,
                                                cfg.model.text.max_len,
                                                {cfg.model.video.height, cfg.model.video.width});
    for (const auto& e : prepared.excluded) err << "excluded: " << e << '\n';
    if (prepared.studies.empty()) throw DataError("every study was excluded");

    OutputLock lock(a.out);
    const auto index = model::embed_corpus(*model, prepared.studies, frames, stride);
    eval::save_embeddings(index, a.out);
    out << json{{"studies", index.videos()},
                {"frames", frames},
                {"stride", stride},
                {"video_passes", model->video_forwards()},
                {"text_passes", model->text_forwards()},
                {"out", a.out}}
               .dump()
        << '\n';
    return kExitOk;
}

// ---- retrieve --------------------------------------------------------------

int cmd_retrieve(const std::string& embeds, const std::string& report_out, std::ostream& out) {
    const auto index = eval::load_embeddings(embeds);
    const auto report = eval::evaluate_retrieval(index);
    const auto text = recall_json(report).dump();
    if (!report_out.empty()) write_text(report_out, text + "\n");
    out << text << '\n';
    return kExitOk;
}

// ---- probe -----------------------------------------------------------------

struct ProbeArgs {
    std::string embeds;
    std::string labels;
    std::vector<std::string> names;
    double fraction = 0.7;
};

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
    const auto index = eval::load_embeddings(a.embeds);
    const auto labels = data::load_labels(a.labels);
    if (index.videos() == 0) throw DataError("no video embeddings in " + a.embeds);

    std::set<std::string> names(a.names.begin(), a.names.end());
    if (names.empty())
        for (const auto& [id, m] : labels)
            for (const auto& [name, v] : m) names.insert(name);
    if (names.empty()) throw DataError("no labels in " + a.labels);

    const auto split = data::split_by_hash(index.video_ids, a.fraction);
    json probe = json::object();
    for (const auto& name : names) {
        // Dense class indices in ascending label order.
        std::map<int, int> dense;
        for (const auto& id : index.video_ids) {
            const auto it = labels.find(id);
            if (it == labels.end()) throw DataError("no labels for study " + id);
            const auto v = it->second.find(name);
            if (v == it->second.end()) throw DataError("study " + id + " has no '" + name + "' label");
            dense.emplace(v->second, 0);
        }
        int next = 0;
        for (auto& [value, idx] : dense) idx = next++;

        auto build = [&](const std::vector<std::size_t>& rows) {
            eval::FeatureSet f;
            f.dim = index.dim;
            for (std::size_t r : rows) {
                f.rows.insert(f.rows.end(), index.video_row(r), index.video_row(r) + index.dim);
                f.labels.push_back(dense.at(labels.at(index.video_ids[r]).at(name)));
            }
            return f;
        };
        const auto m = eval::linear_probe(build(split.train), build(split.test));
        probe[name] = {{"acc", m.acc}, {"auc", m.auc}, {"f1", m.f1}};
    }
    out << json{{"probe", probe}}.dump() << '\n';
    return kExitOk;
}

// ---- stats -----------------------------------------------------------------

int cmd_stats(const std::string& corpus_dir, std::size_t bucket, std::ostream& out) {
    const auto corpus = data::load_corpus(corpus_dir);
    const auto st = data::corpus_stats(corpus, bucket);
    json labels = json::object();
    for (const auto& [name, counts] : st.label_counts) {
        json c = json::object();
        for (const auto& [v, n] : counts) c[std::to_string(v)] = n;
        labels[name] = c;
    }
    json hist = json::array();
    for (const auto& [start, n] : st.impression_length_histogram)
        hist.push_back({{"words_from", start}, {"words_to", start + st.bucket_width - 1}, {"count", n}});
    out << json{{"studies", st.studies},
                {"labels", labels},
                {"series", st.series_counts},
                {"bucket_width", st.bucket_width},
                {"impression_words_histogram", hist},
                {"mean_impression_words", st.mean_impression_words}}
               .dump()
        << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Video-text alignment toolkit", "stalign"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic corpus");
    g->add_option("--n", gen.n, "Number of studies")->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));
    g->add_option("--classes", gen.classes, "Number of classes")->check(CLI::Range(std::size_t{2}, std::size_t{64}));
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("--out", gen.out, "Output corpus directory")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the dual encoder");
    t->add_option("--config", tr.config, "Run config (key=value)")->required();
    t->add_option("--out", tr.out, "Run directory")->required();
    t->add_option("--corpus", tr.corpus, "Corpus directory (overrides config)");
    t->add_option("--seed", tr.seed, "Seed (overrides config)");
    t->add_option("--epochs", tr.epochs, "Epochs (overrides config)")->check(CLI::PositiveNumber);

    EmbedArgs em;
    auto* e = app.add_subcommand("embed", "Embed a corpus with a trained or untrained model");
    e->add_option("--checkpoint", em.checkpoint, "Checkpoint file or run directory")->required();
    e->add_option("--corpus", em.corpus, "Corpus directory (default: the run's corpus)");
    e->add_option("--frames", em.frames, "Frames per clip")->check(CLI::IsMember({1, 4, 8, 16, 32, 64}));
    e->add_option("--stride", em.stride, "Inference offset stride")->check(CLI::PositiveNumber);
    e->add_option("--subset", em.subset, "Studies to embed")->check(CLI::IsMember({"all", "train", "test"}));
    e->add_flag("--untrained", em.untrained, "Use initial weights (zero-shot baseline)");
    e->add_option("--out", em.out, "Embedding JSONL")->required();

    std::string embeds, report_out;
    auto* r = app.add_subcommand("retrieve", "Recall@K and RSUM from an embedding dump");
    r->add_option("--embeds", embeds, "Embedding JSONL")->required();
    r->add_option("--out", report_out, "Also write the report here");

    ProbeArgs pr;
    auto* p = app.add_subcommand("probe", "Linear probe on frozen video embeddings");
    p->add_option("--embeds", pr.embeds, "Embedding JSONL")->required();
    p->add_option("--labels", pr.labels, "labels.jsonl")->required();
    p->add_option("--label", pr.names, "Label name(s) to probe (default: all)");
    p->add_option("--train-fraction", pr.fraction, "Probe training share")->check(CLI::Range(0.05, 0.95));

    std::string stats_corpus;
    std::size_t bucket = 10;
    auto* s = app.add_subcommand("stats", "Corpus statistics");
    s->add_option("--corpus", stats_corpus, "Corpus directory")->required();
    s->add_option("--bucket", bucket, "Histogram bucket width (words)")->check(CLI::PositiveNumber);

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*g) return cmd_gen(gen, out);
        if (*t) return cmd_train(tr, out, err);
        if (*e) return cmd_embed(em, out, err);
        if (*r) return cmd_retrieve(embeds, report_out, out);
        if (*p) return cmd_probe(pr, out);
        if (*s) return cmd_stats(stats_corpus, bucket, out);
    } catch (const ConfigError& ex) {
        err << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const ContractError& ex) {
        err << "usage error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const IoError& ex) {
        err << "i/o error: " << ex.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& ex) {
        err << "i/o error: " << ex.what() << '\n';
        return kExitIo;
    } catch (const DataError& ex) {
        err << "data error: " << ex.what() << '\n';
        return kExitData;
    } catch (const ShapeError& ex) {
        err << "data error: " << ex.what() << '\n';
        return kExitData;
    } catch (const ad::CheckpointError& ex) {
        err << "data error: " << ex.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace stalign::cli
