#include "retina/imageio.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "retina/error.hpp"

namespace retina {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open file: " + path.string());
    return f;
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& why) {
    throw IoError("corrupt or unsupported image '" + path.string() + "': " + why);
}

// ---- PNG ----

RgbImage load_png(const std::filesystem::path& path, std::FILE* f) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }

    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> data;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        corrupt(path, "libpng decode error");
    }

    png_init_io(png, f);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    // normalize everything to 8- or 16-bit RGB without alpha
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png); // stored big-endian; read as host LE below
    png_read_update_info(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    data.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = data.data() + rowbytes * y;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RgbImage img(static_cast<int>(w), static_cast<int>(h));
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (depth == 16) {
        const auto* px = reinterpret_cast<const std::uint16_t*>(data.data());
        for (std::size_t i = 0; i < n * 3; ++i) img.pixels[i] = px[i] / 65535.0;
    } else {
        for (std::size_t i = 0; i < n * 3; ++i) img.pixels[i] = data[i] / 255.0;
    }
    return img;
}

void write_png(const std::filesystem::path& path, int w, int h, int channels,
               const std::vector<png_byte>& data) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path.string());
    }

    png_init_io(png, f.get());
    // fixed filter and compression level so identical rasters give identical bytes
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, w, h, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t rowbytes = static_cast<std::size_t>(w) * channels;
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = const_cast<png_bytep>(data.data()) + rowbytes * static_cast<std::size_t>(y);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---- PNM (binary PPM/PGM) ----

int pnm_read_token(std::FILE* f, const std::filesystem::path& path) {
    // skips whitespace and '#' comments, returns a nonnegative integer
    int c = std::fgetc(f);
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = std::fgetc(f);
        } else if (!std::isspace(c)) {
            break;
        }
        c = std::fgetc(f);
    }
    if (c == EOF || !std::isdigit(c)) corrupt(path, "bad PNM header");
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 30) corrupt(path, "PNM header value out of range");
        c = std::fgetc(f);
    }
    return static_cast<int>(v);
}

RgbImage load_pnm(const std::filesystem::path& path, std::FILE* f, bool color) {
    const int w = pnm_read_token(f, path);
    const int h = pnm_read_token(f, path);
    const int maxval = pnm_read_token(f, path);
    if (w < 1 || h < 1) corrupt(path, "non-positive dimensions");
    if (maxval < 1 || maxval > 65535) corrupt(path, "unsupported maxval");

    const int channels = color ? 3 : 1;
    const std::size_t samples = static_cast<std::size_t>(w) * h * channels;
    const bool wide = maxval > 255;
    std::vector<std::uint8_t> raw(samples * (wide ? 2 : 1));
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size())
        corrupt(path, "truncated pixel data");

    RgbImage img(w, h);
    const double scale = 1.0 / maxval;
    for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
        double rgb[3];
        for (int c = 0; c < channels; ++c) {
            const std::size_t s = i * channels + c;
            const int v = wide ? (raw[s * 2] << 8 | raw[s * 2 + 1]) : raw[s]; // MSB first
            rgb[c] = v * scale;
        }
        for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = rgb[color ? c : 0];
    }
    return img;
}

} // namespace

std::uint8_t quantize8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

RgbImage load_image(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char magic[8] = {0};
    const std::size_t got = std::fread(magic, 1, sizeof magic, f.get());
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

    if (got == 8 && std::memcmp(magic, png_sig, 8) == 0) {
        std::rewind(f.get());
        return load_png(path, f.get());
    }
    if (got >= 2 && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) {
        std::fseek(f.get(), 2, SEEK_SET);
        return load_pnm(path, f.get(), magic[1] == '6');
    }
    throw IoError("unsupported image format (want PNG or binary PPM/PGM): " + path.string());
}

void save_png(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<png_byte> data(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) data[i] = quantize8(img.pixels[i]);
    write_png(path, img.width, img.height, 3, data);
}

void save_png(const std::filesystem::path& path, const GrayImage& img) {
    std::vector<png_byte> data(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) data[i] = quantize8(img.pixels[i]);
    write_png(path, img.width, img.height, 1, data);
}

void save_ppm(const std::filesystem::path& path, const RgbImage& img) {
    FilePtr f = open_file(path, "wb");
    std::fprintf(f.get(), "P6\n%d %d\n255\n", img.width, img.height);
    std::vector<std::uint8_t> data(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) data[i] = quantize8(img.pixels[i]);
    if (std::fwrite(data.data(), 1, data.size(), f.get()) != data.size())
        throw IoError("short write: " + path.string());
}

void save_pgm(const std::filesystem::path& path, const GrayImage& img) {
    FilePtr f = open_file(path, "wb");
    std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width, img.height);
    std::vector<std::uint8_t> data(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) data[i] = quantize8(img.pixels[i]);
    if (std::fwrite(data.data(), 1, data.size(), f.get()) != data.size())
        throw IoError("short write: " + path.string());
}

void save_mask_png(const std::filesystem::path& path, const MaskImage& mask) {
    std::vector<png_byte> data(mask.pixels.size());
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) data[i] = mask.pixels[i] ? 255 : 0;
    write_png(path, mask.width, mask.height, 1, data);
}

MaskImage load_mask(const std::filesystem::path& path) {
    const RgbImage img = load_image(path);
    const GrayImage g = to_gray(img);
    MaskImage mask(g.width, g.height);
    for (std::size_t i = 0; i < g.pixel_count(); ++i) mask.pixels[i] = g.pixels[i] > 0.5 ? 1 : 0;
    return mask;
}

} // namespace retina
