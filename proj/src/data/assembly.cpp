#include "stalign/data/assembly.hpp"

#include <algorithm>
#include <cmath>

#include "stalign/errors.hpp"

namespace stalign::data {

namespace {

bool single_image_view(ImageType t, View v) { return t == ImageType::Lge && v != View::Sax; }

struct Segment {
    const Series* series;
    std::size_t frames;
};

std::vector<Segment> plan_segments(const StudyManifest& m, const ViewSpec& spec) {
    spec.validate();
    std::vector<Segment> out;
    std::size_t lge_depth = 1;
    if (const Series* sax = m.find(ImageType::Lge, View::Sax)) lge_depth = sax->count;
    for (ImageType group : {ImageType::Cine, ImageType::Lge}) {
        for (const auto& [t, v] : spec.entries) {
            if (t != group) continue;
            const Series* s = m.find(t, v);
            if (s == nullptr) {
                throw ExclusionError("study " + m.study_id + " lacks " + to_string(t) + "_" + to_string(v));
            }
            if (s->count == 0) {
                throw DataError("study " + m.study_id + " has an empty " + to_string(t) + "_" + to_string(v) + " series");
            }
            const bool repeat = single_image_view(t, v) && s->count == 1;
            out.push_back({s, repeat ? lge_depth : s->count});
        }
    }
    return out;
}

}  // namespace

std::size_t assembled_frame_count(const StudyManifest& m, const ViewSpec& spec) {
    std::size_t n = 0;
    for (const auto& seg : plan_segments(m, spec)) n += seg.frames;
    return n;
}

std::vector<float> resize_bilinear(const float* src, std::size_t h, std::size_t w, std::size_t out_h,
                                   std::size_t out_w) {
    std::vector<float> out(out_h * out_w);
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double ay = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double ax = fx - static_cast<double>(x0);
            const double top = src[y0 * w + x0] * (1 - ax) + src[y0 * w + x1] * ax;
            const double bot = src[y1 * w + x0] * (1 - ax) + src[y1 * w + x1] * ax;
            out[y * out_w + x] = static_cast<float>(top * (1 - ay) + bot * ay);
        }
    }
    return out;
}

video::VideoTensor assemble_video(const StudyManifest& m, const ViewSpec& spec, const AssemblyOptions& opts) {
    if (opts.height == 0 || opts.width == 0) throw ConfigError("assembly: target size must be positive");
    const auto segments = plan_segments(m, spec);
    const std::size_t hw = opts.height * opts.width;

    std::vector<float> gray;
    for (const auto& seg : segments) {
        const Series& s = *seg.series;
        for (std::size_t i = 0; i < seg.frames; ++i) {
            const float* f = s.frame(std::min(i, s.count - 1));
            if (s.height == opts.height && s.width == opts.width) {
                gray.insert(gray.end(), f, f + hw);
            } else {
                const auto r = resize_bilinear(f, s.height, s.width, opts.height, opts.width);
                gray.insert(gray.end(), r.begin(), r.end());
            }
        }
    }

    const auto [lo_it, hi_it] = std::minmax_element(gray.begin(), gray.end());
    const double lo = *lo_it, range = static_cast<double>(*hi_it) - lo;
    double total = 0.0;
    for (auto& g : gray) {
        g = range > 0.0 ? static_cast<float>((g - lo) / range) : 0.0F;
        total += g;
    }
    const auto mean = static_cast<float>(total / static_cast<double>(gray.size()));

    video::VideoTensor v;
    v.frames = gray.size() / hw;
    v.height = opts.height;
    v.width = opts.width;
    v.values.resize(v.frames * v.frame_stride());
    for (std::size_t f = 0; f < v.frames; ++f)
        for (std::size_t c = 0; c < video::VideoTensor::kChannels; ++c)
            for (std::size_t p = 0; p < hw; ++p) v.values[(f * 3 + c) * hw + p] = gray[f * hw + p] - mean;
    return v;
}

}  // namespace stalign::data
