#pragma once

#include <array>
#include <cstdint>

#include "retina/image.hpp"

namespace retina::enhance {

inline constexpr int kBins = 256;

struct Histogram {
    std::array<std::int64_t, kBins> counts{};
    std::int64_t total = 0;
};

struct ClaheParams {
    int tiles_x = 8;
    int tiles_y = 8;
    double clip_limit = 0.01; // fraction of the tile pixel count per bin, in (0, 1]
};

// Pixel v lands in bin floor(v * 255 + 0.5).
Histogram histogram(const GrayImage& img);

// Classic CDF remap: v -> round(255 * (cdf(v) - cdf_min) / (N - cdf_min)) / 255
// with cdf_min the first nonzero CDF value. A constant image (N == cdf_min)
// is returned unchanged.
GrayImage hist_equalize(const GrayImage& img);

// Contrast-limited adaptive equalization: per-tile clipped histograms with the
// excess redistributed uniformly in one pass (residual into the last bin),
// per-tile CDF mappings, and bilinear blending of the four surrounding tile
// mappings. Border pixels collapse onto the reduced neighbor set, so a 1x1
// grid with clip 1.0 reproduces hist_equalize bit-exactly.
GrayImage clahe(const GrayImage& img, const ClaheParams& p);

} // namespace retina::enhance
