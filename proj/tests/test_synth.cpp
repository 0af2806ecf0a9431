#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "retina/error.hpp"
#include "retina/imageio.hpp"
#include "retina/rng.hpp"
#include "retina/synth.hpp"
#include "test_util.hpp"

using namespace retina;
using namespace retina::synth;

namespace {

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("gen_vessel is deterministic under its seed") {
    VesselParams p;
    p.seed = 42;
    const auto [img1, mask1] = gen_vessel(p);
    const auto [img2, mask2] = gen_vessel(p);
    CHECK(img1.pixels == img2.pixels);
    CHECK(mask1.pixels == mask2.pixels);

    p.seed = 43;
    const auto [img3, mask3] = gen_vessel(p);
    CHECK(img1.pixels != img3.pixels);
}

TEST_CASE("zero branches give an empty mask") {
    VesselParams p;
    p.branches = 0;
    const auto [img, mask] = gen_vessel(p);
    for (auto v : mask.pixels) CHECK(v == 0);
}

TEST_CASE("image and mask dims match and values are in range") {
    VesselParams p;
    p.seed = 7;
    p.size = 48;
    const auto [img, mask] = gen_vessel(p);
    CHECK(img.width == 48);
    CHECK(img.height == 48);
    CHECK(mask.width == 48);
    CHECK(mask.height == 48);
    for (double v : img.pixels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("mask foreground fraction stays in the tuned band over 100 seeds") {
    // band frozen after measuring the default parameters: observed
    // min 0.096, max 0.167 over seeds 0..99
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        VesselParams p;
        p.seed = seed;
        const auto [img, mask] = gen_vessel(p);
        long long fg = 0;
        for (auto v : mask.pixels) fg += v ? 1 : 0;
        const double frac = static_cast<double>(fg) / static_cast<double>(mask.pixels.size());
        CHECK(frac > 0.02);
        CHECK(frac < 0.25);
    }
}

TEST_CASE("vessels darken the image exactly where the mask is set") {
    VesselParams p;
    p.seed = 5;
    const auto [img, mask] = gen_vessel(p);
    p.branches = 0;
    const auto [plain, empty_mask] = gen_vessel(p);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        if (mask.pixels[i])
            CHECK(img.pixels[i] < plain.pixels[i]);
        else
            CHECK(img.pixels[i] == plain.pixels[i]);
    }
}

TEST_CASE("gen_vessel validates its parameters") {
    VesselParams p;
    p.size = 16;
    CHECK_THROWS_AS(gen_vessel(p), InvalidArgument);
    p.size = 64;
    p.radius_min = 0.5;
    CHECK_THROWS_AS(gen_vessel(p), InvalidArgument);
}

TEST_CASE("class signatures are pairwise distinct") {
    const int classes = 10;
    std::vector<ClassSignature> sigs;
    for (int c = 0; c < classes; ++c) sigs.push_back(class_signature(c, classes));
    for (int a = 0; a < classes; ++a)
        for (int b = a + 1; b < classes; ++b) CHECK(!(sigs[a] == sigs[b]));
    CHECK_THROWS_AS(class_signature(10, 10), InvalidArgument);
}

TEST_CASE("disease dataset writes a balanced manifest") {
    TempDir tmp("disease");
    DiseaseParams p;
    p.seed = 1;
    p.classes = 4;
    p.per_class = 5;
    p.size = 64;
    const Manifest m = gen_disease_dataset(p, tmp.path());
    CHECK(m.entries.size() == 20);
    CHECK(m.class_index.size() == 4);
    std::vector<int> per_class(4, 0);
    for (std::size_t i = 0; i < m.entries.size(); ++i) ++per_class[m.label_of(i)];
    for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 5);

    // the manifest on disk loads back and every image exists and decodes
    const Manifest loaded = Manifest::load(tmp / "manifest.json");
    CHECK(loaded.entries.size() == 20);
    for (const auto& e : loaded.entries) {
        const RgbImage img = load_image(Manifest::resolve(tmp / "manifest.json", e.path));
        CHECK(img.width == 64);
    }
}

TEST_CASE("disease dataset generation is byte-identical across runs") {
    TempDir a("disease-a"), b("disease-b");
    DiseaseParams p;
    p.seed = 9;
    p.classes = 3;
    p.per_class = 3;
    p.size = 64;
    gen_disease_dataset(p, a.path());
    gen_disease_dataset(p, b.path());
    for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
        const auto name = entry.path().filename();
        CHECK(file_bytes(entry.path()) == file_bytes(b.path() / name));
    }
}

TEST_CASE("vessel pair directory round trip") {
    TempDir tmp("vessels");
    VesselParams p;
    p.seed = 3;
    write_vessel_dir(p, 4, tmp.path());
    const auto pairs = load_vessel_dir(tmp.path());
    REQUIRE(pairs.size() == 4);
    for (const auto& [img, mask] : pairs) {
        CHECK(img.width == p.size);
        CHECK(mask.width == p.size);
    }

    // masks survive the PNG round trip exactly
    VesselParams q = p;
    q.seed = Rng(p.seed).derive("vessel-sample", 0).next_u64();
    const auto [img0, mask0] = gen_vessel(q);
    CHECK(pairs[0].second.pixels == mask0.pixels);
}

TEST_CASE("pilot nearest-neighbor classifier clears the learnability bar") {
    // dataset health gate: 1-NN on 16x16 thumbnails, every 5th sample held
    // out, must reach the 0.60 threshold frozen when the signatures were
    // tuned (paired classes cap raw-pixel accuracy well below the 0.975 of
    // unpaired signatures)
    TempDir tmp("pilot");
    DiseaseParams params;
    params.seed = 0;
    params.classes = 10;
    params.per_class = 20;
    const Manifest m = gen_disease_dataset(params, tmp.path());

    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const GrayImage g =
            resize_bilinear(to_gray(load_image(Manifest::resolve(tmp / "manifest.json",
                                                                 m.entries[i].path))),
                            16, 16);
        feats.push_back(g.pixels);
        labels.push_back(m.label_of(i));
    }
    int correct = 0, total = 0;
    for (std::size_t i = 0; i < feats.size(); i += 5) {
        double best = 1e300;
        int best_label = -1;
        for (std::size_t j = 0; j < feats.size(); ++j) {
            if (j % 5 == 0) continue;
            double d = 0;
            for (int t = 0; t < 256; ++t) {
                const double diff = feats[i][t] - feats[j][t];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_label = labels[j];
            }
        }
        correct += best_label == labels[i];
        ++total;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.60);
}
