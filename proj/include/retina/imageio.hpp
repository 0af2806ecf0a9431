#pragma once

#include <filesystem>

#include "retina/image.hpp"

namespace retina {

// Decodes a PNG or binary PPM/PGM file. Grayscale sources are promoted to
// RGB with equal channels; 8-bit samples are scaled by 1/255, 16-bit by
// 1/65535. Throws IoError naming the path on unreadable, unsupported or
// corrupt input.
RgbImage load_image(const std::filesystem::path& path);

// 8-bit encoders. Values are clamped to [0,1] and quantized by
// floor(v * 255 + 0.5).
void save_png(const std::filesystem::path& path, const RgbImage& img);
void save_png(const std::filesystem::path& path, const GrayImage& img);
void save_ppm(const std::filesystem::path& path, const RgbImage& img);
void save_pgm(const std::filesystem::path& path, const GrayImage& img);

// Masks are written as 0/255 grayscale PNG; loading thresholds at 0.5.
void save_mask_png(const std::filesystem::path& path, const MaskImage& mask);
MaskImage load_mask(const std::filesystem::path& path);

std::uint8_t quantize8(double v);

} // namespace retina
