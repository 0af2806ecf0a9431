#pragma once

#include <cstdint>
#include <vector>

namespace retina {

// Dense grayscale raster, row-major, intensities in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0);

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t pixel_count() const { return pixels.size(); }
};

// Dense RGB raster, row-major triples, each channel in [0, 1].
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // 3 * width * height, r g b interleaved

    RgbImage() = default;
    RgbImage(int w, int h);

    double& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// Binary per-pixel labels, 0 = background, 1 = foreground.
struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    MaskImage() = default;
    MaskImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// BT.601 luminance. Integer weights over 1000 keep white at exactly 1.0.
GrayImage to_gray(const RgbImage& img);

// Bilinear resampling with pixel-center alignment; resizing to the input
// dimensions is an exact copy. Throws InvalidArgument on zero target dims.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

// Expand a grayscale raster to equal R=G=B channels.
RgbImage gray_to_rgb(const GrayImage& img);

} // namespace retina
