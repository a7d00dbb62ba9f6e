#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "stalign/errors.hpp"
#include "stalign/text/text_encoder.hpp"
#include "stalign/text/tokenizer.hpp"
#include "stalign/util/rng.hpp"

using namespace stalign;
using namespace stalign::text;

namespace {

const std::filesystem::path kData = STALIGN_TEST_DATA_DIR;

Vocabulary test_vocab() { return Vocabulary::load(kData / "test_vocab.txt"); }

TextConfig tiny_text() {
    TextConfig c;
    c.embed_dim = 16;
    c.num_layers = 2;
    c.num_heads = 2;
    c.max_len = 24;
    c.mlp_ratio = 2;
    return c;
}

TokenizedText with_length(const TokenizedText& t, std::size_t len) {
    TokenizedText out = t.trimmed();
    out.ids.resize(len, kPad);
    out.attention_mask.resize(len, 0);
    out.max_len = len;
    return out;
}

}  // namespace

TEST_CASE("reserved ids") {
    Vocabulary v;
    CHECK(v.size() == 260);
    CHECK(v.token(kPad) == "[PAD]");
    CHECK(v.token(kUnk) == "[UNK]");
    CHECK(v.token(kCls) == "[CLS]");
    CHECK(v.token(kSep) == "[SEP]");
    CHECK(v.token(kFirstByte) == "<0x00>");
    CHECK(v.token(kFirstByte + 0x41) == "<0x41>");
    CHECK(v.token(kFirstWord - 1) == "<0xFF>");
    std::set<TokenId> specials{kPad, kUnk, kCls, kSep};
    CHECK(specials.size() == 4);
    for (TokenId id : specials) CHECK(id < 260);
}

TEST_CASE("empty text") {
    const auto t = tokenize("", Vocabulary{}, 8);
    CHECK(t.ids == std::vector<TokenId>{kCls, kSep, kPad, kPad, kPad, kPad, kPad, kPad});
    CHECK(t.attention_mask == std::vector<unsigned char>{1, 1, 0, 0, 0, 0, 0, 0});
    CHECK(t.trimmed().ids == std::vector<TokenId>{kCls, kSep});
}

TEST_CASE("in-vocabulary words map to their line numbers") {
    const auto v = test_vocab();
    const auto t = tokenize("severe lv dysfunction", v).trimmed();
    CHECK(t.ids == std::vector<TokenId>{kCls, 261, 262, 263, kSep});
    const auto upper = tokenize("Severe  LV\tdysfunction", v).trimmed();
    CHECK(upper.ids == t.ids);
}

TEST_CASE("byte fallback and punctuation") {
    const auto v = test_vocab();
    const auto t = tokenize("mild xy.", v).trimmed();
    CHECK(t.ids == std::vector<TokenId>{kCls, 264, kFirstByte + 'x', kFirstByte + 'y', kFirstByte + '.', kSep});
    CHECK(split_words("No LGE, normal.") == std::vector<std::string>{"no", "lge", ",", "normal", "."});
    // Non-ASCII bytes survive through the fallback.
    const auto u = tokenize("\xc3\xa9", v).trimmed();
    CHECK(u.ids == std::vector<TokenId>{kCls, kFirstByte + 0xC3, kFirstByte + 0xA9, kSep});
}

TEST_CASE("tokenize is deterministic and respects max_len") {
    const auto v = test_vocab();
    const std::string text = "normal lv function with mild rv dysfunction and no late enhancement";
    CHECK(tokenize(text, v).ids == tokenize(text, v).ids);

    const auto t = tokenize(text, v, 5);
    CHECK(t.ids.size() == 5);
    CHECK(t.ids.front() == kCls);
    CHECK(t.ids.back() == kSep);
    CHECK(std::count(t.attention_mask.begin(), t.attention_mask.end(), 1) == 5);

    const auto full = tokenize(text, v);
    CHECK(full.ids.size() == 128);
    for (std::size_t i = 0; i < full.ids.size(); ++i) CHECK((full.attention_mask[i] == 1) == (full.ids[i] != kPad));
    CHECK_THROWS_AS(tokenize(text, v, 1), ContractError);
}

TEST_CASE("vocabulary build, save and load") {
    const auto v = Vocabulary::build({"Mild LV dysfunction.", "mild RV dysfunction", "normal study"}, 2);
    // "mild" and "dysfunction" appear twice; everything else once.
    CHECK(v.size() == 262);
    CHECK(v.token(260) == "dysfunction");
    CHECK(v.token(261) == "mild");
    TokenId id = 0;
    CHECK_FALSE(v.lookup("normal", id));
    CHECK_FALSE(v.lookup("[CLS]", id));

    const auto path = std::filesystem::temp_directory_path() / "stalign_vocab_roundtrip.txt";
    v.save(path);
    CHECK(Vocabulary::load(path) == v);

    {
        std::ofstream f(path, std::ios::trunc);
        f << "[PAD]\n[CLS]\n";
    }
    CHECK_THROWS_AS(Vocabulary::load(path), ParseError);
    test_vocab().save(path);
    {
        std::ofstream f(path, std::ios::app);
        f << "severe\n";
    }
    CHECK_THROWS_AS(Vocabulary::load(path), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("encode_text shape and contract errors") {
    const auto v = test_vocab();
    TextEncoder enc(tiny_text(), v.size(), 1);
    const auto out = enc.encode(tokenize("severe lv dysfunction", v, 24));
    CHECK(out.dim(0) == 1);
    CHECK(out.dim(1) == 16);
    for (float x : out.values()) CHECK(std::isfinite(x));

    CHECK_THROWS_AS(enc.encode(tokenize("severe", v, 25)), ContractError);
    auto bad = tokenize("severe", v, 8);
    bad.ids[0] = kSep;
    CHECK_THROWS_AS(enc.encode(bad), ContractError);
    CHECK_THROWS_AS(TextEncoder(tiny_text(), 10, 1), ConfigError);
    TextConfig c = tiny_text();
    c.num_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("padding invariance at every layer") {
    const auto v = test_vocab();
    TextEncoder enc(tiny_text(), v.size(), 2);
    const auto base = tokenize("mild rv dysfunction, normal lv", v, 24);
    const std::size_t live = base.trimmed().length();

    nn::ForwardTrace ref_trace;
    const auto ref = enc.encode(with_length(base, live), &ref_trace);
    for (std::size_t len : {live + 1, live + 5, std::size_t{24}}) {
        nn::ForwardTrace trace;
        const auto out = enc.encode(with_length(base, len), &trace);
        double worst = 0.0;
        for (std::size_t j = 0; j < 16; ++j) worst = std::max(worst, std::abs(double(out.at(j)) - ref.at(j)));
        CHECK(worst < 1e-6);
        REQUIRE(trace.block_outputs.size() == 2);
        for (std::size_t l = 0; l < 2; ++l) {
            double layer_worst = 0.0;
            for (std::size_t i = 0; i < live * 16; ++i)
                layer_worst = std::max(layer_worst, std::abs(double(trace.block_outputs[l].at(i)) -
                                                             ref_trace.block_outputs[l].at(i)));
            CHECK(layer_worst < 1e-6);
        }
    }
}

TEST_CASE("masked keys get exactly zero probability") {
    const auto v = test_vocab();
    TextEncoder enc(tiny_text(), v.size(), 3);
    nn::ForwardTrace trace;
    const auto tok = tokenize("severe lv dysfunction", v, 12);
    enc.encode(tok, &trace);
    REQUIRE(trace.attention.size() == 2);
    for (const auto& rec : trace.attention) {
        const std::size_t n = rec.group_size;
        CHECK(n == 12);
        double worst = 0.0;
        for (std::size_t r = 0; r < rec.probs.size() / n; ++r) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double p = rec.probs[r * n + k];
                if (tok.attention_mask[k] == 0) CHECK(p == 0.0);
                s += p;
            }
            worst = std::max(worst, std::abs(s - 1.0));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("different impressions give different embeddings") {
    const auto v = test_vocab();
    TextEncoder enc(tiny_text(), v.size(), 4);
    const auto a = enc.encode(tokenize("severe lv dysfunction", v, 24).trimmed());
    const auto b = enc.encode(tokenize("normal rv function", v, 24).trimmed());
    double dist = 0.0;
    for (std::size_t j = 0; j < 16; ++j) dist += (double(a.at(j)) - b.at(j)) * (double(a.at(j)) - b.at(j));
    CHECK(std::sqrt(dist) > 0.0);

    TextEncoder again(tiny_text(), v.size(), 4);
    const auto a2 = again.encode(tokenize("severe lv dysfunction", v, 24).trimmed());
    CHECK(std::equal(a.values().begin(), a.values().end(), a2.values().begin()));
    CHECK(again.forward_count() == 1);
}

TEST_CASE("embedding gradient touches only present ids") {
    const auto v = test_vocab();
    TextEncoder enc(tiny_text(), v.size(), 5);
    const auto tok = tokenize("severe lv dysfunction zz", v, 16);
    Rng rng(9);
    std::vector<float> dir(16);
    for (auto& x : dir) x = static_cast<float>(rng.normal());
    auto loss = ad::sum(ad::mul(enc.encode(tok), ad::Tensor::from({1, 16}, dir)));
    loss.backward();

    const auto& emb = enc.parameters().get("text.token_embed");
    REQUIRE(emb.has_grad());
    std::set<TokenId> live;
    for (std::size_t i = 0; i < tok.ids.size(); ++i)
        if (tok.attention_mask[i]) live.insert(tok.ids[i]);
    for (std::size_t id = 0; id < v.size(); ++id) {
        double norm = 0.0;
        for (std::size_t j = 0; j < 16; ++j) norm += std::abs(emb.grad()[id * 16 + j]);
        if (live.count(static_cast<TokenId>(id))) {
            CHECK(norm > 0.0);
        } else {
            CHECK(norm == 0.0);
        }
    }
}
