#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "retina/image.hpp"

namespace retina::metrics {

// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::int64_t> counts; // num_classes^2, row-major

    std::int64_t& at(int truth, int pred) { return counts[truth * num_classes + pred]; }
    std::int64_t at(int truth, int pred) const { return counts[truth * num_classes + pred]; }
    std::int64_t total() const;
    std::int64_t trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths,
                          int num_classes);

double accuracy(const std::vector<int>& preds, const std::vector<int>& truths);

// (false-positive rate, true-positive rate) points from (0,0) to (1,1) over
// the unique-score threshold sweep; auc by the trapezoid rule, which equals
// P(s+ > s-) + P(s+ = s-)/2. Requires both labels present.
struct RocCurve {
    std::vector<std::pair<double, double>> points;
    double auc = 0.0;
};

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// (recall, precision) points at unique thresholds; area by the step-wise
// right-continuous rule (sum of recall increments times precision), which can
// differ from interpolated conventions. Requires at least one positive.
struct PrCurve {
    std::vector<std::pair<double, double>> points;
    double auc = 0.0;
};

PrCurve pr_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Intersection over union of the foreground; two empty masks agree perfectly
// and score 1.0.
double jaccard(const MaskImage& a, const MaskImage& b);

} // namespace retina::metrics
