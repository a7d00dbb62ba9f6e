#include "stalign/data/manifest.hpp"

#include <algorithm>
#include <set>

#include "stalign/errors.hpp"

namespace stalign::data {

std::string to_string(ImageType t) { return t == ImageType::Cine ? "CINE" : "LGE"; }

std::string to_string(View v) {
    switch (v) {
        case View::Lax: return "lax";
        case View::Sax: return "sax";
        case View::Ch2: return "2ch";
        case View::Ch3: return "3ch";
    }
    return "?";
}

ImageType parse_image_type(std::string_view s) {
    if (s == "CINE") return ImageType::Cine;
    if (s == "LGE") return ImageType::Lge;
    throw ConfigError("unknown image type '" + std::string(s) + "' (expected CINE or LGE)");
}

View parse_view(std::string_view s) {
    if (s == "lax") return View::Lax;
    if (s == "sax") return View::Sax;
    if (s == "2ch") return View::Ch2;
    if (s == "3ch") return View::Ch3;
    throw ConfigError("unknown view '" + std::string(s) + "' (expected lax, sax, 2ch or 3ch)");
}

const Series* StudyManifest::find(ImageType t, View v) const {
    for (const auto& s : series) {
        if (s.image_type == t && s.view == v) return &s;
    }
    return nullptr;
}

void StudyManifest::validate() const {
    if (study_id.empty()) throw DataError("study with empty id");
    for (const auto& s : series) {
        const std::string where = study_id + " " + to_string(s.image_type) + "_" + to_string(s.view);
        if (s.count == 0) throw DataError("empty series in " + where);
        if (s.height == 0 || s.width == 0) throw DataError("zero-sized frames in " + where);
        if (s.pixels.size() != s.count * s.height * s.width) throw DataError("pixel count mismatch in " + where);
    }
}

void validate_corpus(const Corpus& corpus) {
    std::set<std::string> ids;
    for (const auto& m : corpus) {
        m.validate();
        if (!ids.insert(m.study_id).second) throw DataError("duplicate study id " + m.study_id);
    }
}

ViewSpec ViewSpec::parse(std::string_view text) {
    ViewSpec spec;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t plus = std::min(text.find('+', pos), text.size());
        const std::string_view group = text.substr(pos, plus - pos);
        const std::size_t us = group.find('_');
        if (us == std::string_view::npos) {
            throw ConfigError("view spec group '" + std::string(group) + "' must look like TYPE_view-view");
        }
        const ImageType t = parse_image_type(group.substr(0, us));
        std::string_view views = group.substr(us + 1);
        std::size_t vp = 0;
        while (vp <= views.size()) {
            const std::size_t dash = std::min(views.find('-', vp), views.size());
            spec.entries.emplace_back(t, parse_view(views.substr(vp, dash - vp)));
            vp = dash + 1;
        }
        pos = plus + 1;
    }
    spec.validate();
    return spec;
}

std::string ViewSpec::str() const {
    std::string out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const bool new_group = i == 0 || entries[i].first != entries[i - 1].first;
        if (new_group) {
            if (i) out += '+';
            out += to_string(entries[i].first) + "_";
        } else {
            out += '-';
        }
        out += to_string(entries[i].second);
    }
    return out;
}

bool ViewSpec::contains(ImageType t, View v) const {
    return std::find(entries.begin(), entries.end(), std::pair{t, v}) != entries.end();
}

void ViewSpec::validate() const {
    if (entries.empty()) throw ConfigError("view spec must contain at least one (type, view) pair");
    std::set<std::pair<ImageType, View>> seen;
    for (const auto& e : entries) {
        if (!seen.insert(e).second) {
            throw ConfigError("view spec repeats " + to_string(e.first) + "_" + to_string(e.second));
        }
    }
}

}  // namespace stalign::data
