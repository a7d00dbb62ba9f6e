#pragma once

// Builds one clip from a study's typed/viewed series.
//
// CINE entries come first, then LGE, each group in spec order. CINE series
// contribute their time frames; LGE sax its depth slices. A single-image LGE
// view is repeated to the LGE sax depth count so every LGE view spans the
// same number of frames. Each frame is bilinearly resized when its size
// differs from the target and replicated to three channels. The whole clip is
// then min-max scaled to [0, 1] and mean-centered.

#include <cstddef>

#include "stalign/data/manifest.hpp"
#include "stalign/video/video_encoder.hpp"

namespace stalign::data {

struct AssemblyOptions {
    std::size_t height = 32;
    std::size_t width = 32;
};

/// Frame count assemble_video would produce. Throws ExclusionError when a
/// spec pair is missing.
std::size_t assembled_frame_count(const StudyManifest& m, const ViewSpec& spec);

video::VideoTensor assemble_video(const StudyManifest& m, const ViewSpec& spec, const AssemblyOptions& opts = {});

/// Bilinear resample (half-pixel centers) of one h x w frame.
std::vector<float> resize_bilinear(const float* src, std::size_t h, std::size_t w, std::size_t out_h,
                                   std::size_t out_w);

}  // namespace stalign::data
