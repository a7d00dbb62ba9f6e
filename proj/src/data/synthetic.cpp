#include "stalign/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "stalign/errors.hpp"
#include "stalign/util/rng.hpp"

namespace stalign::data {

namespace {

const std::vector<std::string> kLocations{"anteroseptal", "inferolateral", "apical",  "basal",
                                          "anterior",     "inferior",      "septal",  "lateral"};
const std::vector<std::string> kFindings{"hypokinesis", "akinesis", "dyskinesis", "thinning",
                                         "aneurysm",    "edema",    "scarring",   "dilation"};
const std::vector<std::string> kDistractors{
    "Normal right ventricular size and function.",
    "No pericardial effusion.",
    "Trace mitral regurgitation.",
    "The aortic root is normal in caliber.",
    "Left atrium is mildly enlarged.",
    "No intracardiac thrombus is seen.",
    "Image quality is adequate.",
    "Comparison with the prior study is limited.",
};

constexpr double kBlobRadius[] = {2.0, 3.0, 4.5};
constexpr double kPatchRadius[] = {2.0, 4.0};
constexpr double kTravel = 8.0;
constexpr double kPatchDistance = 8.0;
constexpr double kBackground = 0.1;

// Soft disc: 1 inside r, falling linearly to 0 over one pixel.
double disc(double dx, double dy, double r) { return std::clamp(r + 0.5 - std::hypot(dx, dy), 0.0, 1.0); }

struct Canvas {
    std::size_t h, w;
    std::vector<float> px;
    Canvas(std::size_t h_, std::size_t w_, Rng& rng, double noise) : h(h_), w(w_), px(h_ * w_) {
        for (auto& p : px) p = static_cast<float>(kBackground + rng.normal(0.0, noise));
    }
    void stamp(double cy, double cx, double r, double intensity) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                px[y * w + x] += static_cast<float>(intensity * disc(double(x) - cx, double(y) - cy, r));
    }
};

Series make_series(ImageType t, View v, std::size_t h, std::size_t w) {
    Series s;
    s.image_type = t;
    s.view = v;
    s.height = h;
    s.width = w;
    return s;
}

Series cine_series(View view, const SyntheticOptions& o, double angle, double radius, Rng& rng) {
    Series s = make_series(ImageType::Cine, view, o.height, o.width);
    const double cy0 = o.height / 2.0 - 0.5, cx0 = o.width / 2.0 - 0.5;
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double offset = rng.uniform(-3.0, 3.0);
    for (std::size_t f = 0; f < o.cine_frames; ++f) {
        const double along =
            o.cine_frames > 1 ? -kTravel + 2.0 * kTravel * double(f) / double(o.cine_frames - 1) : 0.0;
        Canvas c(o.height, o.width, rng, o.noise);
        c.stamp(cy0 + along * uy + offset * ux, cx0 + along * ux - offset * uy, radius, 0.8);
        s.pixels.insert(s.pixels.end(), c.px.begin(), c.px.end());
    }
    s.count = o.cine_frames;
    return s;
}

Series lge_series(View view, std::size_t count, const SyntheticOptions& o, double angle, double radius, Rng& rng) {
    Series s = make_series(ImageType::Lge, view, o.height, o.width);
    const double cy = o.height / 2.0 - 0.5 + kPatchDistance * std::sin(angle);
    const double cx = o.width / 2.0 - 0.5 + kPatchDistance * std::cos(angle);
    for (std::size_t i = 0; i < count; ++i) {
        Canvas c(o.height, o.width, rng, o.noise);
        c.stamp(cy, cx, radius, 0.5 + 0.1 * double(i));
        s.pixels.insert(s.pixels.end(), c.px.begin(), c.px.end());
    }
    s.count = count;
    return s;
}

std::string capitalized(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::string impression(std::size_t k, std::size_t size, std::size_t extent, Rng& rng) {
    const auto kw = class_keywords(k);
    std::vector<std::string> sentences{
        capitalized(kw[1]) + " of the " + kw[0] + " wall.",
        capitalized(kSizeWords[size]) + " left ventricular cavity.",
        capitalized(kExtentWords[extent]) + " late gadolinium enhancement.",
    };
    const std::size_t n_distract = 1 + rng.below(2);
    std::vector<std::size_t> pool(kDistractors.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    for (std::size_t i = 0; i < n_distract; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(rng.below(sentences.size() + 1)),
                         kDistractors[pool[i]]);
    }
    std::string out;
    for (const auto& s : sentences) out += (out.empty() ? "" : " ") + s;
    return out;
}

}  // namespace

std::vector<std::string> class_keywords(std::size_t k) {
    if (k < kLocations.size()) return {kLocations[k], kFindings[k]};
    const std::string tag = std::to_string(k);
    return {"region" + tag, "finding" + tag};
}

Corpus gen_synthetic_corpus(const SyntheticOptions& o) {
    if (o.n_studies < 2) throw ContractError("gen_synthetic_corpus: need at least 2 studies");
    if (o.n_classes < 2) throw ContractError("gen_synthetic_corpus: need at least 2 classes");
    if (o.height < 8 || o.width < 8 || o.cine_frames == 0 || o.lge_slices == 0) {
        throw ContractError("gen_synthetic_corpus: frames must be at least 8x8 with non-empty series");
    }
    Corpus corpus;
    corpus.reserve(o.n_studies);
    for (std::size_t i = 0; i < o.n_studies; ++i) {
        Rng rng(mix_seed(o.seed, "study" + std::to_string(i)));
        const std::size_t k = rng.below(o.n_classes);
        const std::size_t size = rng.below(3);
        const std::size_t extent = rng.below(2);
        const double motion = 2.0 * std::numbers::pi * double(k) / double(o.n_classes);
        const double patch = motion + std::numbers::pi / 4.0;

        StudyManifest m;
        char id[16];
        std::snprintf(id, sizeof id, "S%05zu", i + 1);
        m.study_id = id;
        m.series.push_back(cine_series(View::Lax, o, motion, kBlobRadius[size], rng));
        m.series.push_back(cine_series(View::Sax, o, motion, kBlobRadius[size], rng));
        m.series.push_back(lge_series(View::Sax, o.lge_slices, o, patch, kPatchRadius[extent], rng));
        for (View v : {View::Lax, View::Ch2, View::Ch3})
            m.series.push_back(lge_series(v, 1, o, patch, kPatchRadius[extent], rng));
        m.impression = impression(k, size, extent, rng);
        m.labels = {{"class", static_cast<int>(k)}, {"size", static_cast<int>(size)}, {"extent", static_cast<int>(extent)}};
        corpus.push_back(std::move(m));
    }
    return corpus;
}

Corpus gen_synthetic_corpus(std::size_t n_studies, std::size_t n_classes, std::uint64_t seed) {
    SyntheticOptions o;
    o.n_studies = n_studies;
    o.n_classes = n_classes;
    o.seed = seed;
    return gen_synthetic_corpus(o);
}

}  // namespace stalign::data
