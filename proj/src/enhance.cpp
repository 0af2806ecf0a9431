#include "retina/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "retina/error.hpp"

namespace retina::enhance {

namespace {

inline int bin_of(double v) {
    const int b = static_cast<int>(std::floor(v * 255.0 + 0.5));
    return std::clamp(b, 0, kBins - 1);
}

// Equalization LUT (bin -> output level). A histogram concentrated in a
// single bin maps to the identity so constant regions pass through
// unchanged; this is checked on the raw histogram, before any clipping.
struct TileLut {
    std::array<std::int16_t, kBins> level{};
};

bool single_occupied_bin(const std::array<std::int64_t, kBins>& counts) {
    int occupied = 0;
    for (int b = 0; b < kBins; ++b)
        if (counts[b] > 0 && ++occupied > 1) return false;
    return true;
}

TileLut make_lut(std::array<std::int64_t, kBins> counts, std::int64_t total,
                 std::int64_t clip_count) {
    TileLut lut;
    if (single_occupied_bin(counts)) {
        for (int b = 0; b < kBins; ++b) lut.level[b] = static_cast<std::int16_t>(b);
        return lut;
    }

    if (clip_count > 0) {
        std::int64_t excess = 0;
        for (int b = 0; b < kBins; ++b) {
            if (counts[b] > clip_count) {
                excess += counts[b] - clip_count;
                counts[b] = clip_count;
            }
        }
        // one uniform redistribution pass; the residual goes to the last bin
        const std::int64_t inc = excess / kBins;
        const std::int64_t rem = excess % kBins;
        if (inc > 0)
            for (int b = 0; b < kBins; ++b) counts[b] += inc;
        counts[kBins - 1] += rem;
    }

    std::int64_t cdf = 0;
    std::int64_t cdf_min = 0;
    for (int b = 0; b < kBins; ++b) {
        if (counts[b] > 0) {
            cdf_min = counts[b];
            break;
        }
    }
    const double denom = static_cast<double>(total - cdf_min);
    for (int b = 0; b < kBins; ++b) {
        cdf += counts[b];
        const double m = std::floor(255.0 * static_cast<double>(cdf - cdf_min) / denom + 0.5);
        lut.level[b] = static_cast<std::int16_t>(std::clamp(m, 0.0, 255.0));
    }
    return lut;
}

// Per-axis blending plan: for each pixel coordinate, the bracketing tile
// indices and the interpolation fraction. Border pixels collapse onto the
// nearest tile (lo == hi, frac == 0).
struct AxisBlend {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

AxisBlend axis_blend(int extent, int tiles, const std::vector<double>& centers) {
    AxisBlend b;
    b.lo.resize(extent);
    b.hi.resize(extent);
    b.frac.resize(extent);
    for (int x = 0; x < extent; ++x) {
        if (tiles == 1 || x <= centers.front()) {
            b.lo[x] = b.hi[x] = 0;
            b.frac[x] = 0.0;
        } else if (x >= centers.back()) {
            b.lo[x] = b.hi[x] = tiles - 1;
            b.frac[x] = 0.0;
        } else {
            int t = 0;
            while (t + 1 < tiles && centers[t + 1] <= x) ++t;
            b.lo[x] = t;
            b.hi[x] = t + 1;
            b.frac[x] = (x - centers[t]) / (centers[t + 1] - centers[t]);
        }
    }
    return b;
}

} // namespace

Histogram histogram(const GrayImage& img) {
    if (img.width < 1 || img.height < 1) throw InvalidArgument("histogram of empty image");
    Histogram h;
    for (double v : img.pixels) ++h.counts[bin_of(v)];
    h.total = static_cast<std::int64_t>(img.pixel_count());
    return h;
}

GrayImage hist_equalize(const GrayImage& img) {
    const Histogram h = histogram(img);
    if (single_occupied_bin(h.counts)) return img;
    const TileLut lut = make_lut(h.counts, h.total, /*clip_count=*/0);
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        out.pixels[i] = lut.level[bin_of(img.pixels[i])] / 255.0;
    return out;
}

GrayImage clahe(const GrayImage& img, const ClaheParams& p) {
    if (p.tiles_x < 1 || p.tiles_y < 1) throw InvalidArgument("clahe tile counts must be >= 1");
    if (!(p.clip_limit > 0.0 && p.clip_limit <= 1.0))
        throw InvalidArgument("clahe clip_limit must be in (0, 1]");
    if (img.width < p.tiles_x || img.height < p.tiles_y)
        throw InvalidArgument("clahe tile grid larger than image");

    if (single_occupied_bin(histogram(img).counts)) return img;

    // tile boundaries and pixel-index centers
    std::vector<int> bx(p.tiles_x + 1), by(p.tiles_y + 1);
    for (int t = 0; t <= p.tiles_x; ++t)
        bx[t] = static_cast<int>(static_cast<std::int64_t>(t) * img.width / p.tiles_x);
    for (int t = 0; t <= p.tiles_y; ++t)
        by[t] = static_cast<int>(static_cast<std::int64_t>(t) * img.height / p.tiles_y);
    std::vector<double> cx(p.tiles_x), cy(p.tiles_y);
    for (int t = 0; t < p.tiles_x; ++t) cx[t] = (bx[t] + bx[t + 1] - 1) / 2.0;
    for (int t = 0; t < p.tiles_y; ++t) cy[t] = (by[t] + by[t + 1] - 1) / 2.0;

    std::vector<TileLut> luts(static_cast<std::size_t>(p.tiles_x) * p.tiles_y);
    for (int ty = 0; ty < p.tiles_y; ++ty) {
        for (int tx = 0; tx < p.tiles_x; ++tx) {
            std::array<std::int64_t, kBins> counts{};
            for (int y = by[ty]; y < by[ty + 1]; ++y)
                for (int x = bx[tx]; x < bx[tx + 1]; ++x) ++counts[bin_of(img.at(x, y))];
            const std::int64_t area =
                static_cast<std::int64_t>(bx[tx + 1] - bx[tx]) * (by[ty + 1] - by[ty]);
            // flooring-to-at-least-one rule for the per-bin clip count
            const auto clip_count =
                std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(p.clip_limit *
                                                                               static_cast<double>(area))));
            const bool no_clipping = clip_count >= area;
            luts[static_cast<std::size_t>(ty) * p.tiles_x + tx] =
                make_lut(counts, area, no_clipping ? 0 : clip_count);
        }
    }

    const AxisBlend axx = axis_blend(img.width, p.tiles_x, cx);
    const AxisBlend axy = axis_blend(img.height, p.tiles_y, cy);
    const auto lut_at = [&](int ty, int tx) -> const TileLut& {
        return luts[static_cast<std::size_t>(ty) * p.tiles_x + tx];
    };

    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        const int tyT = axy.lo[y], tyB = axy.hi[y];
        const double fy = axy.frac[y];
        for (int x = 0; x < img.width; ++x) {
            const int txL = axx.lo[x], txR = axx.hi[x];
            const double fx = axx.frac[x];
            const int b = bin_of(img.at(x, y));

            double v;
            if (txL == txR && tyT == tyB) {
                v = lut_at(tyT, txL).level[b]; // collapsed: bit-exact single mapping
            } else if (txL == txR) {
                v = (1.0 - fy) * lut_at(tyT, txL).level[b] + fy * lut_at(tyB, txL).level[b];
            } else if (tyT == tyB) {
                v = (1.0 - fx) * lut_at(tyT, txL).level[b] + fx * lut_at(tyT, txR).level[b];
            } else {
                const double top =
                    (1.0 - fx) * lut_at(tyT, txL).level[b] + fx * lut_at(tyT, txR).level[b];
                const double bot =
                    (1.0 - fx) * lut_at(tyB, txL).level[b] + fx * lut_at(tyB, txR).level[b];
                v = (1.0 - fy) * top + fy * bot;
            }
            out.at(x, y) = v / 255.0;
        }
    }
    return out;
}

} // namespace retina::enhance
