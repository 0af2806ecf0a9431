#include "retina/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "retina/error.hpp"
#include "retina/imageio.hpp"
#include "retina/rng.hpp"

namespace retina::synth {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct Canvas {
    GrayImage img;
    MaskImage mask;
    double cx, cy, disk_radius;
};

Canvas make_fundus(const VesselParams& p, Rng rng) {
    Canvas c{GrayImage(p.size, p.size), MaskImage(p.size, p.size), p.size / 2.0, p.size / 2.0,
             0.47 * p.size};

    // low-frequency seeded noise: a few random plane waves
    struct Wave {
        double amp, fx, fy, phase;
    };
    Wave waves[4];
    double amp_sum = 0.0;
    for (Wave& w : waves) {
        w.amp = rng.uniform(0.5, 1.0);
        w.fx = rng.uniform(0.7, 2.8);
        w.fy = rng.uniform(0.7, 2.8);
        w.phase = rng.uniform(0.0, kTau);
        amp_sum += w.amp;
    }

    for (int y = 0; y < p.size; ++y) {
        for (int x = 0; x < p.size; ++x) {
            const double dx = x - c.cx, dy = y - c.cy;
            const double r = std::sqrt(dx * dx + dy * dy);
            double v;
            if (r <= c.disk_radius) {
                const double rr = r / c.disk_radius;
                v = p.background_base - 0.18 * rr * rr;
                double noise = 0.0;
                for (const Wave& w : waves)
                    noise += w.amp * std::cos(kTau * (w.fx * x + w.fy * y) / p.size + w.phase);
                v += p.background_amplitude * noise / amp_sum;
            } else {
                v = 0.06;
            }
            c.img.at(x, y) = std::clamp(v, 0.0, 1.0);
        }
    }
    return c;
}

void stamp_disk(Canvas& c, double px, double py, double radius, double contrast) {
    const int x0 = std::max(0, static_cast<int>(std::floor(px - radius)));
    const int x1 = std::min(c.img.width - 1, static_cast<int>(std::ceil(px + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(py - radius)));
    const int y1 = std::min(c.img.height - 1, static_cast<int>(std::ceil(py + radius)));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - px, dy = y - py;
            const double d2 = dx * dx + dy * dy;
            if (d2 > r2) continue;
            c.mask.at(x, y) = 1;
            // darker toward the centerline
            const double depth = contrast * (1.0 - 0.45 * d2 / r2);
            c.img.at(x, y) = std::clamp(c.img.at(x, y) - depth, 0.02, 1.0);
        }
    }
}

void walk_vessel(Canvas& c, Rng rng, const VesselParams& p, double x, double y, double angle,
                 double radius, int steps, int fork_depth) {
    const int fork_step =
        fork_depth > 0 && rng.next_double() < 0.5
            ? static_cast<int>(rng.next_below(std::max(1, steps / 4)) + steps / 4)
            : -1;
    for (int t = 0; t < steps; ++t) {
        const double rt = radius * (1.0 - (1.0 - p.taper) * t / std::max(1, steps));
        stamp_disk(c, x, y, rt, p.vessel_contrast);
        if (t == fork_step) {
            const double sign = rng.next_double() < 0.5 ? 1.0 : -1.0;
            walk_vessel(c, rng.derive("fork", t), p, x, y, angle + sign * rng.uniform(0.4, 0.9),
                        rt * 0.65, steps - t, fork_depth - 1);
        }
        angle += rng.normal(0.0, p.turn_sigma);
        x += p.step_len * std::cos(angle);
        y += p.step_len * std::sin(angle);
        const double dx = x - c.cx, dy = y - c.cy;
        if (std::sqrt(dx * dx + dy * dy) > 0.93 * c.disk_radius) break;
    }
}

} // namespace

std::pair<GrayImage, MaskImage> gen_vessel(const VesselParams& p) {
    if (p.size < 32) throw InvalidArgument("gen_vessel: size must be >= 32");
    if (p.radius_min < 1.0 || p.radius_max < p.radius_min)
        throw InvalidArgument("gen_vessel: vessel radius range must start at >= 1 pixel");

    const Rng base = Rng(p.seed).derive("vessel-image");
    Canvas c = make_fundus(p, base.derive("background"));

    // all branches leave a common disc point; the disc sits on the nasal side
    // with a little jitter, as in real fundus photographs
    Rng layout = base.derive("layout");
    const double theta0 = std::numbers::pi + layout.uniform(-0.2, 0.2);
    const double ox = c.cx + 0.55 * c.disk_radius * std::cos(theta0);
    const double oy = c.cy + 0.55 * c.disk_radius * std::sin(theta0);
    const double inward = std::atan2(c.cy - oy, c.cx - ox);

    const int steps = static_cast<int>(1.1 * p.size / p.step_len);
    for (int b = 0; b < p.branches; ++b) {
        Rng rng = base.derive("branch", static_cast<std::uint64_t>(b));
        const double jx = ox + rng.uniform(-1.5, 1.5);
        const double jy = oy + rng.uniform(-1.5, 1.5);
        const double angle = inward + rng.uniform(-0.9, 0.9);
        const double radius = rng.uniform(p.radius_min, p.radius_max);
        walk_vessel(c, rng.derive("walk"), p, jx, jy, angle, radius, steps, 1);
    }
    return {std::move(c.img), std::move(c.mask)};
}

ClassSignature class_signature(int class_id, int num_classes) {
    if (class_id < 0 || num_classes < 1 || class_id >= num_classes)
        throw InvalidArgument("class_signature: class id out of range");
    // classes come in pairs: the pair shares its lesion look (visible to the
    // enhancement stream) and differs only in vessel contrast (visible to the
    // segmentation stream), so neither stream can solve the task alone
    const int group = class_id / 2;
    const int groups = (num_classes + 1) / 2;
    ClassSignature s;
    s.vessel_contrast_scale = class_id % 2 == 0 ? 1.1 : 0.3;
    s.background_shift = class_id % 2 == 0 ? 0.0 : -0.07;
    s.blob_delta = group % 2 == 0 ? 0.42 : -0.38;
    s.blob_count = 3 + group % 3;
    s.blob_radius_frac = 0.10 + 0.02 * (group % 2);
    s.sector_angle = kTau * group / groups; // distinct per group
    s.sector_radius_frac = 0.5;
    return s;
}

namespace {

void add_lesions(GrayImage& img, const ClassSignature& sig, Rng rng) {
    const double cx = img.width / 2.0, cy = img.height / 2.0;
    const double disk_radius = 0.47 * img.width;
    for (int b = 0; b < sig.blob_count; ++b) {
        const double angle = sig.sector_angle + rng.normal(0.0, 0.18);
        const double rad =
            disk_radius * std::clamp(sig.sector_radius_frac + rng.normal(0.0, 0.08), 0.1, 0.85);
        const double bx = cx + rad * std::cos(angle);
        const double by = cy + rad * std::sin(angle);
        const double radius = sig.blob_radius_frac * img.width * rng.uniform(0.8, 1.25);
        const double sigma = radius / 1.6;
        const int reach = static_cast<int>(std::ceil(3.0 * sigma));
        const int x0 = std::max(0, static_cast<int>(bx) - reach);
        const int x1 = std::min(img.width - 1, static_cast<int>(bx) + reach);
        const int y0 = std::max(0, static_cast<int>(by) - reach);
        const int y1 = std::min(img.height - 1, static_cast<int>(by) + reach);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - bx, dy = y - by;
                const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                img.at(x, y) = std::clamp(img.at(x, y) + sig.blob_delta * g, 0.0, 1.0);
            }
        }
    }
}

// fundus-like tint so dataset images are honest RGB
RgbImage tint(const GrayImage& g) {
    RgbImage out(g.width, g.height);
    for (std::size_t i = 0; i < g.pixel_count(); ++i) {
        const double v = g.pixels[i];
        out.pixels[i * 3 + 0] = std::clamp(v * 1.25, 0.0, 1.0);
        out.pixels[i * 3 + 1] = v * 0.70;
        out.pixels[i * 3 + 2] = v * 0.42;
    }
    return out;
}

std::string class_label(int c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02d", c);
    return buf;
}

} // namespace

Manifest gen_disease_dataset(const DiseaseParams& params, const std::filesystem::path& out_dir) {
    if (params.classes < 2 || params.per_class < 1)
        throw InvalidArgument("gen_disease_dataset: need >= 2 classes and >= 1 sample per class");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir.string());

    const Rng base = Rng(params.seed).derive("disease-dataset");
    Manifest manifest;
    for (int c = 0; c < params.classes; ++c) {
        const ClassSignature sig = class_signature(c, params.classes);
        for (int s = 0; s < params.per_class; ++s) {
            const std::uint64_t sample_index =
                static_cast<std::uint64_t>(c) * params.per_class + s;
            Rng rng = base.derive("sample", sample_index);

            VesselParams vp;
            vp.seed = rng.derive("vessel-seed").next_u64();
            vp.size = params.size;
            vp.branches = 9;
            vp.radius_min = 1.4;
            vp.radius_max = 2.8;
            vp.background_amplitude = 0.02;
            vp.background_base = 0.62 + sig.background_shift;
            vp.vessel_contrast = 0.40 * sig.vessel_contrast_scale;
            auto [gray, mask] = gen_vessel(vp);
            add_lesions(gray, sig, rng.derive("lesions"));

            char name[32];
            std::snprintf(name, sizeof name, "c%02d_s%04d.png", c, s);
            save_png(out_dir / name, tint(gray));
            manifest.entries.push_back({name, class_label(c)});
        }
    }
    std::sort(manifest.entries.begin(), manifest.entries.end(),
              [](const auto& a, const auto& b) { return a.path < b.path; });
    manifest.finalize();
    manifest.save(out_dir / "manifest.json");
    return manifest;
}

void write_vessel_dir(const VesselParams& params, int count,
                      const std::filesystem::path& out_dir) {
    if (count < 1) throw InvalidArgument("write_vessel_dir: count must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir.string());

    const Rng base(params.seed);
    for (int i = 0; i < count; ++i) {
        VesselParams p = params;
        p.seed = base.derive("vessel-sample", static_cast<std::uint64_t>(i)).next_u64();
        const auto [img, mask] = gen_vessel(p);
        char img_name[32], mask_name[32];
        std::snprintf(img_name, sizeof img_name, "img_%04d.png", i);
        std::snprintf(mask_name, sizeof mask_name, "mask_%04d.png", i);
        save_png(out_dir / img_name, img);
        save_mask_png(out_dir / mask_name, mask);
    }
}

std::vector<std::pair<GrayImage, MaskImage>> load_vessel_dir(const std::filesystem::path& dir) {
    std::vector<std::pair<GrayImage, MaskImage>> pairs;
    for (int i = 0;; ++i) {
        char img_name[32], mask_name[32];
        std::snprintf(img_name, sizeof img_name, "img_%04d.png", i);
        std::snprintf(mask_name, sizeof mask_name, "mask_%04d.png", i);
        const auto img_path = dir / img_name;
        const auto mask_path = dir / mask_name;
        if (!std::filesystem::exists(img_path)) break;
        if (!std::filesystem::exists(mask_path))
            throw IoError("vessel dataset missing mask for " + img_path.string());
        pairs.emplace_back(to_gray(load_image(img_path)), load_mask(mask_path));
    }
    if (pairs.empty())
        throw IoError("no img_####.png files found in " + dir.string());
    return pairs;
}

} // namespace retina::synth
