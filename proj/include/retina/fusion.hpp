#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "retina/eigenpca.hpp"
#include "retina/enhance.hpp"
#include "retina/image.hpp"
#include "retina/manifest.hpp"
#include "retina/metrics.hpp"
#include "retina/segnet.hpp"
#include "retina/svm.hpp"

namespace retina::fusion {

// Shared preprocessing of both streams.
struct StreamConfig {
    int width = 128, height = 128; // canonical working resolution
    enhance::ClaheParams clahe;
    int k_rgb = 61;  // retained components, enhancement stream
    int k_unet = 40; // retained components, segmentation stream
    bool use_binary_mask = false; // stream B consumes the probability map by default
};

// The assembled two-stream classifier for one kernel choice.
struct TwoStreamModel {
    StreamConfig config;
    seg::SegNet segnet;
    pca::EigenModel eigen_rgb, eigen_unet;
    svm::MultiSvm svm_rgb, svm_unet;
    double hybrid_w = 0.5; // weight of the enhancement stream
};

// Flattened stream inputs before PCA: gray -> resize -> clahe, and
// gray -> resize -> vessel probability map (or binary mask).
std::vector<double> rgb_stream_vector(const StreamConfig& config, const RgbImage& img);
std::vector<double> unet_stream_vector(const StreamConfig& config, const seg::SegNet& net,
                                       const RgbImage& img);

// PCA coefficients of both streams: (k_rgb vector, k_unet vector).
std::pair<std::vector<double>, std::vector<double>> stream_features(const TwoStreamModel& model,
                                                                    const RgbImage& img);

// Convex combination of the per-stream vote distributions: each count vector
// is normalized by C(C-1)/2 and blended as w * A + (1-w) * B, so the scores
// sum to 1.
std::vector<double> fused_scores(const std::vector<int>& votes_a, const std::vector<int>& votes_b,
                                 double w);

// Fused prediction; ties resolve to the lowest class id.
std::pair<int, std::vector<double>> predict(const TwoStreamModel& model, const RgbImage& img);

struct RatioSweepRow {
    double hybrid_w = 0.0;
    svm::KernelKind kernel = svm::KernelKind::kRbf;
    double validation_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// On-disk bundle: shared stream models plus one SVM pair per trained kernel.
struct Bundle {
    StreamConfig config;
    seg::SegNet segnet;
    pca::EigenModel eigen_rgb, eigen_unet;
    struct KernelSvms {
        svm::MultiSvm rgb, unet;
    };
    std::map<svm::KernelKind, KernelSvms> svms;
    svm::KernelKind selected_kernel = svm::KernelKind::kRbf;
    double hybrid_w = 0.5;
    std::string manifest_checksum;
    DatasetSplit split;

    const KernelSvms& kernel_svms(svm::KernelKind kind) const;
    TwoStreamModel model(svm::KernelKind kind) const;
    TwoStreamModel model() const { return model(selected_kernel); }

    void save(const std::filesystem::path& dir) const;
    static Bundle load(const std::filesystem::path& dir);
};

struct TrainOptions {
    std::uint64_t seed = 0;
    StreamConfig config;
    std::vector<svm::KernelKind> kernels = {svm::KernelKind::kRbf, svm::KernelKind::kPolynomial};
    svm::TrainParams svm_params; // gamma defaults to 1/k inside ovo_train
    SplitRatios ratios;
};

// Full two-stream training: stratified split, per-stream PCA fits on the
// train images, one OvO SVM pair per kernel. The returned bundle carries the
// split and the manifest checksum so later stages reuse identical sets.
Bundle train_two_stream(const std::filesystem::path& manifest_path, const Manifest& manifest,
                        const seg::SegNet& segnet, const TrainOptions& options,
                        std::vector<std::string>* warnings = nullptr);

// Cached per-image vote counts for one manifest subset, per stream and kernel.
struct VoteTable {
    std::vector<int> truth; // dense class ids
    // votes[kernel][image][class]
    std::map<svm::KernelKind, std::vector<std::vector<int>>> rgb, unet;
};

VoteTable compute_votes(const Bundle& bundle, const std::filesystem::path& manifest_path,
                        const Manifest& manifest, const std::vector<int>& indices);

// Accuracy per (w, kernel) over the bundle's validation and test splits.
// Rows are ordered kernels-outer, grid-inner; selection of the best row is
// by validation accuracy (first row wins ties).
std::vector<RatioSweepRow> sweep_ratio(const Bundle& bundle,
                                       const std::filesystem::path& manifest_path,
                                       const Manifest& manifest,
                                       const std::vector<double>& ratio_grid,
                                       const std::vector<svm::KernelKind>& kernels);

std::size_t best_row(const std::vector<RatioSweepRow>& rows);

// Fused accuracy and confusion over one index set using the bundle's selected
// kernel and hybrid_w.
struct ClassifierEvaluation {
    double accuracy = 0.0;
    metrics::ConfusionMatrix confusion;
    std::vector<int> predictions;
    std::vector<int> truth;
};

ClassifierEvaluation evaluate_classifier(const Bundle& bundle,
                                         const std::filesystem::path& manifest_path,
                                         const Manifest& manifest,
                                         const std::vector<int>& indices);

// FNV-1a hash of a file's bytes, hex-encoded; used to tie bundles to the
// manifest they were trained from.
std::string file_checksum(const std::filesystem::path& path);

} // namespace retina::fusion
