#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "retina/image.hpp"
#include "retina/manifest.hpp"

namespace retina::synth {

// Synthetic fundus with random-walk vessel trees. Radii and step lengths are
// absolute pixels so vessel appearance is scale-stable across image sizes.
struct VesselParams {
    std::uint64_t seed = 0;
    int size = 64;
    int branches = 5;
    double step_len = 1.6;
    double turn_sigma = 0.32;       // radians per step
    double radius_min = 1.2;
    double radius_max = 2.4;
    double taper = 0.45;            // end-of-walk radius fraction
    double background_base = 0.62;  // disk brightness at the center
    double background_amplitude = 0.03;
    double vessel_contrast = 0.30;  // darkening applied along the vessel
};

// Fundus disk with a smooth radial gradient plus low-amplitude seeded noise;
// vessels are tapering random walks darker than the background. The mask is
// the exact support of the stamped vessel pixels. Same seed, same bytes.
std::pair<GrayImage, MaskImage> gen_vessel(const VesselParams& params);

// Per-class lesion signature, a pure function of (class_id, num_classes).
// Some classes perturb vessel contrast (visible to the segmentation stream),
// all place characteristic blobs (visible to the enhancement stream).
struct ClassSignature {
    double vessel_contrast_scale = 1.0;
    double background_shift = 0.0;  // same pair bit as the contrast scale
    int blob_count = 2;
    double blob_radius_frac = 0.06; // of image size
    double blob_delta = 0.3;        // signed intensity shift
    double sector_angle = 0.0;      // preferred lesion direction from center
    double sector_radius_frac = 0.5;

    bool operator==(const ClassSignature&) const = default;
};

ClassSignature class_signature(int class_id, int num_classes);

struct DiseaseParams {
    std::uint64_t seed = 0;
    int classes = 10;
    int per_class = 20;
    int size = 128;
};

// Writes per_class PNG images per class plus manifest.json into out_dir and
// returns the manifest. Labels are "class_00".. in class-id order; files are
// byte-identical across runs with the same params.
Manifest gen_disease_dataset(const DiseaseParams& params, const std::filesystem::path& out_dir);

// Writes img_%04d.png / mask_%04d.png pairs for `count` seeds derived from
// params.seed.
void write_vessel_dir(const VesselParams& params, int count,
                      const std::filesystem::path& out_dir);

// Loads pairs produced by write_vessel_dir.
std::vector<std::pair<GrayImage, MaskImage>> load_vessel_dir(const std::filesystem::path& dir);

} // namespace retina::synth
