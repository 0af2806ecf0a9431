#include "retina/image.hpp"

#include <algorithm>
#include <cmath>

#include "retina/error.hpp"

namespace retina {

GrayImage::GrayImage(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw InvalidArgument("GrayImage dimensions must be positive");
}

RgbImage::RgbImage(int w, int h)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0.0) {
    if (w < 1 || h < 1) throw InvalidArgument("RgbImage dimensions must be positive");
}

MaskImage::MaskImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw InvalidArgument("MaskImage dimensions must be positive");
}

GrayImage to_gray(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    const std::size_t n = out.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img.pixels[i * 3 + 0];
        const double g = img.pixels[i * 3 + 1];
        const double b = img.pixels[i * 3 + 2];
        out.pixels[i] = (299.0 * r + 587.0 * g + 114.0 * b) / 1000.0;
    }
    return out;
}

RgbImage gray_to_rgb(const GrayImage& img) {
    RgbImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        out.pixels[i * 3 + 0] = img.pixels[i];
        out.pixels[i * 3 + 1] = img.pixels[i];
        out.pixels[i * 3 + 2] = img.pixels[i];
    }
    return out;
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw InvalidArgument("resize target dimensions must be positive");
    if (img.width < 1 || img.height < 1) throw InvalidArgument("resize source image is empty");

    GrayImage out(out_w, out_h);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;

    for (int y = 0; y < out_h; ++y) {
        // pixel-center alignment: output center maps to source coordinate
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;

        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;

            const double top = (1.0 - wx) * img.at(x0, y0) + wx * img.at(x1, y0);
            const double bot = (1.0 - wx) * img.at(x0, y1) + wx * img.at(x1, y1);
            out.at(x, y) = (1.0 - wy) * top + wy * bot;
        }
    }
    return out;
}

} // namespace retina
