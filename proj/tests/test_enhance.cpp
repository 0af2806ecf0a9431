#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "retina/enhance.hpp"
#include "retina/error.hpp"
#include "retina/rng.hpp"

using namespace retina;
using namespace retina::enhance;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed) {
    GrayImage img(w, h);
    Rng rng(seed);
    for (double& p : img.pixels) p = rng.next_below(256) / 255.0;
    return img;
}

// Straight-line reference of the whole clip-redistribute-blend pipeline,
// written from the operation contract and kept independent of the library
// implementation. Tile boundaries at floor(t * extent / tiles), per-tile
// histogram of floor(v*255+0.5), clip at max(1, floor(clip * area)) unless
// that disables clipping, one uniform redistribution pass with the residual
// on the last bin, CDF mapping, then bilinear blending between tile centers
// with border collapse.
struct RefClahe {
    int tiles_x, tiles_y;
    double clip;

    std::vector<int> lut(const GrayImage& img, int tx0, int tx1, int ty0, int ty1) const {
        std::vector<long long> h(256, 0);
        long long area = 0;
        for (int y = ty0; y < ty1; ++y)
            for (int x = tx0; x < tx1; ++x) {
                const int b = std::clamp(static_cast<int>(std::floor(img.at(x, y) * 255.0 + 0.5)),
                                         0, 255);
                ++h[b];
                ++area;
            }
        int occupied = 0;
        for (int b = 0; b < 256; ++b) occupied += h[b] > 0;
        std::vector<int> lut(256);
        if (occupied <= 1) {
            for (int b = 0; b < 256; ++b) lut[b] = b;
            return lut;
        }
        const long long clip_count =
            std::max<long long>(1, static_cast<long long>(std::floor(clip * static_cast<double>(area))));
        if (clip_count < area) {
            long long excess = 0;
            for (int b = 0; b < 256; ++b)
                if (h[b] > clip_count) {
                    excess += h[b] - clip_count;
                    h[b] = clip_count;
                }
            const long long inc = excess / 256, rem = excess % 256;
            for (int b = 0; b < 256; ++b) h[b] += inc;
            h[255] += rem;
        }
        long long cdf_min = 0;
        for (int b = 0; b < 256; ++b)
            if (h[b] > 0) {
                cdf_min = h[b];
                break;
            }
        long long cdf = 0;
        for (int b = 0; b < 256; ++b) {
            cdf += h[b];
            const double m =
                std::floor(255.0 * static_cast<double>(cdf - cdf_min) /
                               static_cast<double>(area - cdf_min) +
                           0.5);
            lut[b] = static_cast<int>(std::clamp(m, 0.0, 255.0));
        }
        return lut;
    }

    GrayImage apply(const GrayImage& img) const {
        std::vector<std::vector<int>> luts;
        std::vector<double> cx(tiles_x), cy(tiles_y);
        for (int ty = 0; ty < tiles_y; ++ty)
            for (int tx = 0; tx < tiles_x; ++tx) {
                const int x0 = tx * img.width / tiles_x, x1 = (tx + 1) * img.width / tiles_x;
                const int y0 = ty * img.height / tiles_y, y1 = (ty + 1) * img.height / tiles_y;
                luts.push_back(lut(img, x0, x1, y0, y1));
                cx[tx] = (x0 + x1 - 1) / 2.0;
                cy[ty] = (y0 + y1 - 1) / 2.0;
            }

        GrayImage out(img.width, img.height);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const int b = std::clamp(static_cast<int>(std::floor(img.at(x, y) * 255.0 + 0.5)),
                                         0, 255);
                int txl = 0, txr = 0, tyt = 0, tyb = 0;
                double fx = 0.0, fy = 0.0;
                if (tiles_x > 1 && x > cx.front() && x < cx.back()) {
                    while (txl + 1 < tiles_x && cx[txl + 1] <= x) ++txl;
                    txr = txl + 1;
                    fx = (x - cx[txl]) / (cx[txr] - cx[txl]);
                } else if (tiles_x > 1 && x >= cx.back()) {
                    txl = txr = tiles_x - 1;
                }
                if (tiles_y > 1 && y > cy.front() && y < cy.back()) {
                    while (tyt + 1 < tiles_y && cy[tyt + 1] <= y) ++tyt;
                    tyb = tyt + 1;
                    fy = (y - cy[tyt]) / (cy[tyb] - cy[tyt]);
                } else if (tiles_y > 1 && y >= cy.back()) {
                    tyt = tyb = tiles_y - 1;
                }
                const auto level = [&](int ty, int tx) {
                    return static_cast<double>(luts[ty * tiles_x + tx][b]);
                };
                double v;
                if (txl == txr && tyt == tyb)
                    v = level(tyt, txl);
                else if (txl == txr)
                    v = (1 - fy) * level(tyt, txl) + fy * level(tyb, txl);
                else if (tyt == tyb)
                    v = (1 - fx) * level(tyt, txl) + fx * level(tyt, txr);
                else
                    v = (1 - fy) * ((1 - fx) * level(tyt, txl) + fx * level(tyt, txr)) +
                        fy * ((1 - fx) * level(tyb, txl) + fx * level(tyb, txr));
                out.at(x, y) = v / 255.0;
            }
        }
        return out;
    }
};

} // namespace

TEST_CASE("histogram counts a constant image into one bin") {
    GrayImage img(2, 2, 0.5);
    const Histogram h = histogram(img);
    CHECK(h.counts[128] == 4);
    CHECK(h.total == 4);
    long long sum = 0;
    for (auto c : h.counts) sum += c;
    CHECK(sum == 4);
}

TEST_CASE("histogram splits exact levels into their bins") {
    GrayImage img(2, 2);
    img.pixels = {0.0, 1.0 / 255.0, 1.0 / 255.0, 1.0};
    const Histogram h = histogram(img);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 2);
    CHECK(h.counts[255] == 1);
}

TEST_CASE("histogram total always equals the pixel count") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GrayImage img = random_image(13, 7, seed);
        const Histogram h = histogram(img);
        CHECK(h.total == 13 * 7);
        long long sum = 0;
        for (auto c : h.counts) sum += c;
        CHECK(sum == h.total);
    }
}

TEST_CASE("hist_equalize leaves a full ramp unchanged") {
    GrayImage img(16, 16);
    for (int i = 0; i < 256; ++i) img.pixels[i] = i / 255.0;
    const GrayImage out = hist_equalize(img);
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        CHECK(out.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
}

TEST_CASE("hist_equalize leaves a constant image untouched") {
    GrayImage img(3, 3, 0.25);
    const GrayImage out = hist_equalize(img);
    CHECK(out.pixels == img.pixels);
}

TEST_CASE("hist_equalize matches the hand-evaluated CDF on 4 pixels") {
    // levels {0, 0, 128, 255}: cdf(0)=2, cdf(128)=3, cdf(255)=4, cdf_min=2
    // m(0)   = round(255 * (2-2) / (4-2)) = 0
    // m(128) = round(255 * (3-2) / (4-2)) = round(127.5) = 128
    // m(255) = round(255 * (4-2) / (4-2)) = 255
    GrayImage img(4, 1);
    img.pixels = {0.0, 0.0, 128.0 / 255.0, 1.0};
    const GrayImage out = hist_equalize(img);
    CHECK(out.pixels[0] == 0.0);
    CHECK(out.pixels[1] == 0.0);
    CHECK(out.pixels[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
    CHECK(out.pixels[3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hist_equalize output stays in [0,1] and is idempotent up to a level") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GrayImage img = random_image(32, 32, seed);
        const GrayImage once = hist_equalize(img);
        for (double v : once.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const GrayImage twice = hist_equalize(once);
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
            CHECK(std::abs(twice.pixels[i] - once.pixels[i]) <= 1.0 / 255.0 + 1e-12);
    }
}

TEST_CASE("global equalization mapping is nondecreasing") {
    const GrayImage img = random_image(24, 24, 9);
    const GrayImage out = hist_equalize(img);
    std::vector<std::pair<double, double>> pairs(img.pixel_count());
    for (std::size_t i = 0; i < img.pixel_count(); ++i) pairs[i] = {img.pixels[i], out.pixels[i]};
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i].second >= pairs[i - 1].second);
}

TEST_CASE("clahe with one tile and clip 1.0 equals hist_equalize bit-exactly") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const GrayImage img = random_image(17 + static_cast<int>(seed), 23, seed);
        const GrayImage a = clahe(img, {1, 1, 1.0});
        const GrayImage b = hist_equalize(img);
        CHECK(a.pixels == b.pixels);
    }
}

TEST_CASE("clahe leaves a constant image unchanged for any params") {
    GrayImage img(16, 16, 0.5);
    for (const ClaheParams p : {ClaheParams{1, 1, 1.0}, ClaheParams{4, 4, 0.1},
                                ClaheParams{2, 8, 0.01}}) {
        const GrayImage out = clahe(img, p);
        CHECK(out.pixels == img.pixels);
    }
}

TEST_CASE("clahe matches the straight-line reference on 8x8 with 2x2 tiles") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GrayImage img = random_image(8, 8, 100 + seed);
        const GrayImage got = clahe(img, {2, 2, 0.5});
        const GrayImage want = RefClahe{2, 2, 0.5}.apply(img);
        REQUIRE(got.pixel_count() == want.pixel_count());
        for (std::size_t i = 0; i < got.pixel_count(); ++i)
            CHECK(got.pixels[i] == doctest::Approx(want.pixels[i]).epsilon(1e-12));
    }
}

TEST_CASE("clahe matches the reference on uneven tile grids") {
    const GrayImage img = random_image(21, 13, 42);
    const GrayImage got = clahe(img, {3, 2, 0.2});
    const GrayImage want = RefClahe{3, 2, 0.2}.apply(img);
    for (std::size_t i = 0; i < got.pixel_count(); ++i)
        CHECK(got.pixels[i] == doctest::Approx(want.pixels[i]).epsilon(1e-12));
}

TEST_CASE("clahe output range stays within [0,1]") {
    const GrayImage img = random_image(40, 40, 4);
    const GrayImage out = clahe(img, {8, 8, 0.01});
    for (double v : out.pixels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("clahe validates its parameters") {
    const GrayImage img = random_image(8, 8, 0);
    CHECK_THROWS_AS(clahe(img, {0, 1, 0.5}), InvalidArgument);
    CHECK_THROWS_AS(clahe(img, {1, 1, 0.0}), InvalidArgument);
    CHECK_THROWS_AS(clahe(img, {1, 1, 1.5}), InvalidArgument);
    CHECK_THROWS_AS(clahe(img, {9, 1, 0.5}), InvalidArgument); // grid larger than image
}
