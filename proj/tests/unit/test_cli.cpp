#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stalign/autodiff/checkpoint.hpp"
#include "stalign/cli/cli.hpp"
#include "stalign/data/corpus_io.hpp"
#include "stalign/eval/retrieval.hpp"
#include "stalign/model/pipeline.hpp"
#include "stalign/model/run_config.hpp"
#include "stalign/model/trainer.hpp"

using namespace stalign;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path workdir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("stalign_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// Small model so the train/embed round trip stays fast.
const char* kTinyConfig =
    "epochs=1\nbatch_size=4\nval_every=0\nproj_dim=8\n"
    "video.embed_dim=16\nvideo.num_blocks=1\nvideo.num_heads=2\nvideo.mlp_ratio=2\n"
    "text.embed_dim=16\ntext.num_layers=1\ntext.num_heads=2\ntext.mlp_ratio=2\ntext.max_len=48\n";

}  // namespace

TEST_CASE("gen is deterministic and validates its arguments") {
    const auto dir = workdir("gen");
    const auto a = (dir / "a").string(), b = (dir / "b").string();
    REQUIRE(run({"gen", "--n", "10", "--classes", "2", "--seed", "7", "--out", a}).code == 0);
    REQUIRE(run({"gen", "--n", "10", "--classes", "2", "--seed", "7", "--out", b}).code == 0);
    CHECK(slurp(dir / "a/corpus.jsonl") == slurp(dir / "b/corpus.jsonl"));
    CHECK(slurp(dir / "a/labels.jsonl") == slurp(dir / "b/labels.jsonl"));
    std::size_t frames = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a/frames")) {
        CHECK(slurp(entry.path()) == slurp(dir / "b/frames" / entry.path().filename()));
        ++frames;
    }
    CHECK(frames == 10 * 6);
    CHECK_FALSE(fs::exists(dir / "a.lock"));

    CHECK(run({"gen", "--n", "0", "--out", a}).code == cli::kExitUsage);
    CHECK(run({"gen", "--n", "10"}).code == cli::kExitUsage);
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"bogus"}).code == cli::kExitUsage);
    CHECK(run({"gen", "--help"}).code == cli::kExitOk);

    {
        std::ofstream f(dir / "plain_file");
        f << "x";
    }
    CHECK(run({"gen", "--n", "4", "--out", (dir / "plain_file" / "sub").string()}).code == cli::kExitIo);
    fs::remove_all(dir);
}

TEST_CASE("a held lock blocks a second writer") {
    const auto dir = workdir("lock");
    {
        std::ofstream f(dir / "out.lock");
    }
    const auto r = run({"gen", "--n", "4", "--out", (dir / "out").string()});
    CHECK(r.code == cli::kExitIo);
    CHECK(r.err.find("locked") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out"));
    fs::remove(dir / "out.lock");
    CHECK(run({"gen", "--n", "4", "--out", (dir / "out").string()}).code == 0);
    fs::remove_all(dir);
}

TEST_CASE("stats on a generated corpus") {
    const auto dir = workdir("stats");
    REQUIRE(run({"gen", "--n", "200", "--classes", "4", "--seed", "1", "--out", (dir / "c").string()}).code == 0);
    const auto r = run({"stats", "--corpus", (dir / "c").string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["studies"] == 200);
    std::size_t total = 0;
    for (const auto& b : j["impression_words_histogram"]) total += b["count"].get<std::size_t>();
    CHECK(total == 200);
    CHECK(j["labels"]["class"].size() == 4);
    CHECK(j["series"]["CINE_lax"] == 200);

    // Damaged corpus -> data error.
    std::ofstream(dir / "c/corpus.jsonl", std::ios::app) << "{not json\n";
    CHECK(run({"stats", "--corpus", (dir / "c").string()}).code == cli::kExitData);
    CHECK(run({"stats", "--corpus", (dir / "nowhere").string()}).code == cli::kExitIo);
    fs::remove_all(dir);
}

TEST_CASE("retrieve on a gallery no larger than K") {
    const auto dir = workdir("retrieve");
    eval::CorpusIndex index;
    index.dim = 2;
    index.video_ids = index.text_ids = {"a", "b", "c", "d"};
    index.video = {1, 0, 0, 1, -1, 0, 0, -1};
    index.text = {0, 1, 1, 0, 0, -1, -1, 0};  // deliberately mismatched
    eval::save_embeddings(index, dir / "e.jsonl");
    const auto r = run({"retrieve", "--embeds", (dir / "e.jsonl").string(), "--out", (dir / "r.json").string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["rsum"].get<double>() == doctest::Approx(600.0));
    for (const char* dir_name : {"t2v", "v2t"})
        for (const char* k : {"r5", "r10", "r50"}) CHECK(j[dir_name][k].get<double>() == doctest::Approx(100.0));
    CHECK(json::parse(slurp(dir / "r.json")) == j);
    fs::remove_all(dir);
}

TEST_CASE("train, embed and retrieve through files match the in-memory pipeline") {
    const auto dir = workdir("pipeline");
    const auto corpus_dir = dir / "corpus";
    REQUIRE(run({"gen", "--n", "12", "--classes", "2", "--seed", "4", "--out", corpus_dir.string()}).code == 0);
    {
        std::ofstream f(dir / "cfg.txt");
        f << kTinyConfig << "corpus=" << corpus_dir.string() << '\n';
    }
    const auto run_dir = dir / "run";
    const auto t = run({"train", "--config", (dir / "cfg.txt").string(), "--out", run_dir.string()});
    REQUIRE(t.code == 0);
    CHECK(json::parse(t.out)["epochs"] == 1);

    const auto e1 = dir / "e1.jsonl", e2 = dir / "e2.jsonl";
    const auto em = run({"embed", "--checkpoint", (run_dir / "final.ckpt").string(), "--frames", "4", "--out",
                         e1.string()});
    REQUIRE(em.code == 0);
    CHECK(json::parse(em.out)["video_passes"] == 12 * 7);  // 28 frames, segments of 7
    CHECK(json::parse(em.out)["text_passes"] == 12);
    REQUIRE(run({"embed", "--checkpoint", run_dir.string(), "--frames", "4", "--out", e2.string()}).code == 0);
    CHECK(slurp(e1) == slurp(e2));  // rerun is byte-identical

    // In-memory reference.
    const auto cfg = model::RunConfig::load(run_dir / "config.txt");
    const auto vocab = text::Vocabulary::load(run_dir / "vocab.txt");
    auto m = model::initial_model(cfg, vocab.size());
    ad::load_checkpoint(m->parameters(), run_dir / "final.ckpt");
    const auto corpus = data::load_corpus(corpus_dir);
    const auto studies =
        model::prepare_corpus(corpus, {}, data::ViewSpec::parse(cfg.view_spec), vocab, cfg.model.text.max_len).studies;
    const auto index = model::embed_corpus(*m, studies, 4, 1);
    CHECK(eval::load_embeddings(e1) == index);

    const auto report = eval::evaluate_retrieval(index);
    const auto r = run({"retrieve", "--embeds", e1.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["rsum"].get<double>() == eval::rsum_percent(report));
    CHECK(j["t2v"]["r5"].get<double>() == 100.0 * report.recall.at(eval::Direction::TextToVideo).at(5));
    CHECK(j["v2t"]["r10"].get<double>() == 100.0 * report.recall.at(eval::Direction::VideoToText).at(10));

    // Probe runs on the dump with the corpus labels.
    const auto p = run({"probe", "--embeds", e1.string(), "--labels", (corpus_dir / "labels.jsonl").string(),
                        "--label", "class"});
    REQUIRE(p.code == 0);
    const auto pj = json::parse(p.out)["probe"]["class"];
    for (const char* k : {"acc", "auc", "f1"}) {
        CHECK(pj[k].get<double>() >= 0.0);
        CHECK(pj[k].get<double>() <= 1.0);
    }
    CHECK(run({"probe", "--embeds", e1.string(), "--labels", (corpus_dir / "labels.jsonl").string(), "--label",
               "missing"})
              .code == cli::kExitData);

    // Untrained baseline uses the same run's config and vocabulary.
    CHECK(run({"embed", "--checkpoint", run_dir.string(), "--untrained", "--out", (dir / "e0.jsonl").string()})
              .code == 0);
    CHECK(run({"embed", "--checkpoint", run_dir.string(), "--frames", "3", "--out", e2.string()}).code ==
          cli::kExitUsage);

    // A config that no longer matches the weights is a data error naming the parameter.
    {
        auto text = slurp(run_dir / "config.txt");
        text.replace(text.find("proj_dim=8\n"), 11, "proj_dim=12\n");
        std::ofstream(run_dir / "config.txt", std::ios::trunc) << text;
    }
    const auto bad = run({"embed", "--checkpoint", run_dir.string(), "--out", e2.string()});
    CHECK(bad.code == cli::kExitData);
    CHECK(bad.err.find("proj.") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("training with every study excluded is a data error") {
    const auto dir = workdir("excluded");
    REQUIRE(run({"gen", "--n", "4", "--classes", "2", "--out", (dir / "c").string()}).code == 0);
    {
        std::ofstream f(dir / "cfg.txt");
        f << kTinyConfig << "view_spec=CINE_2ch\ncorpus=" << (dir / "c").string() << '\n';
    }
    const auto r = run({"train", "--config", (dir / "cfg.txt").string(), "--out", (dir / "run").string()});
    CHECK(r.code == cli::kExitData);
    CHECK(r.err.find("excluded") != std::string::npos);
    CHECK(run({"train", "--config", (dir / "none.txt").string(), "--out", (dir / "run").string()}).code ==
          cli::kExitIo);
    fs::remove_all(dir);
}
