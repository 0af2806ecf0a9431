#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "retina/image.hpp"
#include "retina/metrics.hpp"
#include "retina/tensor.hpp"

namespace retina::seg {

// Reduced encoder-decoder segmentation net: per level two 3x3 same-padding
// convolutions with ReLU and 2x2/2 max pooling; the decoder upsamples by
// nearest-neighbor followed by a convolution and concatenates the first half
// of the matching encoder feature channels (the halved skip path). A 1x1
// convolution maps to class logits.
struct SegNetConfig {
    int depth = 2;         // encoder levels
    int base_channels = 8; // channels at the first level; doubles per level
    int in_channels = 1;
    int num_classes = 2;
};

struct ConvLayer {
    int in_ch = 0, out_ch = 0, ksize = 3;
    std::vector<double> weights; // out_ch x in_ch x k x k
    std::vector<double> bias;    // out_ch
};

struct SegNet {
    SegNetConfig config;
    // layer order: enc0.conv1, enc0.conv2, ..., bottleneck.conv1,
    // bottleneck.conv2, then per decoder level (deepest first) upconv, conv1,
    // conv2, and finally the 1x1 head
    std::vector<ConvLayer> layers;

    static SegNet make(const SegNetConfig& config);                    // zero parameters
    static SegNet init(const SegNetConfig& config, std::uint64_t seed); // He-normal weights

    std::size_t param_count() const;
    std::vector<double> flatten_params() const;
    void set_params(std::span<const double> params);
};

// Per-pixel class probabilities (softmax over the channel axis). Spatial dims
// must be divisible by 2^depth.
Tensor4 forward(const SegNet& net, const Tensor4& batch);

struct WeightMapParams {
    double w0 = 10.0;
    double sigma = 5.0;
    std::vector<double> class_weights = {1.0, 1.0}; // background, vessel
};

struct WeightMap {
    int width = 0, height = 0;
    std::vector<double> values;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// w(x) = w_c(x) + w0 exp(-(d1 + d2)^2 / (2 sigma^2)) with d1, d2 the exact
// Euclidean distances to the nearest and second-nearest foreground connected
// components (4-connectivity). With fewer than two components the exponential
// term vanishes and the map reduces to the class weights.
WeightMap weight_map(const MaskImage& truth, const WeightMapParams& params);

struct LossReport {
    double total = 0.0;
    std::vector<double> per_pixel; // batch-major, then row-major per image
};

// E = -sum_x w(x) log p_truth(x), probabilities clamped to >= 1e-12.
LossReport weighted_xent(const Tensor4& probs, const std::vector<MaskImage>& truth,
                         const std::vector<WeightMap>& weights);
LossReport weighted_xent(const Tensor4& probs, const MaskImage& truth, const WeightMap& weights);

// Analytic gradients of weighted_xent(forward(net, batch)) for every
// parameter, in flatten_params order.
std::vector<double> backward(const SegNet& net, const Tensor4& batch,
                             const std::vector<MaskImage>& truth,
                             const std::vector<WeightMap>& weights);

struct TrainOptions {
    int epochs = 50;
    double lr_initial = 1e-2; // first half of the epochs
    double lr_final = 1e-3;   // second half
    std::uint64_t seed = 0;
    WeightMapParams weight_params; // class_weights empty = estimate from data
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean per-pixel weighted cross-entropy
    std::vector<double> class_weights;
};

// Plain SGD over single-sample batches with seeded shuffling. Steps use the
// mean per-pixel loss so the learning rate is resolution-independent; throws
// on an empty dataset or a non-finite loss.
TrainResult train(SegNet& net, const std::vector<std::pair<GrayImage, MaskImage>>& data,
                  const TrainOptions& options);

// argmax mask (ties to background) and the vessel-probability map. Inputs
// with dims not divisible by 2^depth are reflect-padded and cropped back.
std::pair<MaskImage, GrayImage> predict_mask(const SegNet& net, const GrayImage& img);

void save(const SegNet& net, const std::filesystem::path& path,
          std::uint64_t seed = 0, int epochs = 0);
SegNet load(const std::filesystem::path& path);

// Jaccard averaged per image; ROC and PR over pixels pooled across the whole
// set (the probability map scored against the ground-truth labels).
struct SegEvaluation {
    int images = 0;
    double mean_jaccard = 0.0;
    metrics::RocCurve roc;
    metrics::PrCurve pr;
};

SegEvaluation evaluate(const SegNet& net,
                       const std::vector<std::pair<GrayImage, MaskImage>>& pairs);

} // namespace retina::seg
