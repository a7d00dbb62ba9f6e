#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stalign::data {

enum class ImageType { Cine, Lge };
enum class View { Lax, Sax, Ch2, Ch3 };

std::string to_string(ImageType t);
std::string to_string(View v);
ImageType parse_image_type(std::string_view s);
View parse_view(std::string_view s);

/// One image series: `count` grayscale frames of height x width, row-major.
struct Series {
    ImageType image_type = ImageType::Cine;
    View view = View::Sax;
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;  // count * height * width

    const float* frame(std::size_t i) const { return pixels.data() + i * height * width; }
    bool operator==(const Series&) const = default;
};

struct StudyManifest {
    std::string study_id;
    std::vector<Series> series;
    std::string impression;
    std::map<std::string, int> labels;

    const Series* find(ImageType t, View v) const;
    /// Throws DataError on an empty or inconsistently sized series.
    void validate() const;
    bool operator==(const StudyManifest&) const = default;
};

using Corpus = std::vector<StudyManifest>;

/// Throws DataError on duplicate study ids or an invalid study.
void validate_corpus(const Corpus& corpus);

/// Ordered (type, view) recipe, written like "CINE_lax-sax+LGE_lax-sax-2ch-3ch".
struct ViewSpec {
    std::vector<std::pair<ImageType, View>> entries;

    static ViewSpec parse(std::string_view text);
    std::string str() const;
    bool contains(ImageType t, View v) const;
    /// Throws ConfigError when empty or holding duplicates.
    void validate() const;
    bool operator==(const ViewSpec&) const = default;
};

}  // namespace stalign::data
