#include "retina/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "retina/error.hpp"

namespace retina::metrics {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (int c = 0; c < num_classes; ++c) t += at(c, c);
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths,
                          int num_classes) {
    if (preds.size() != truths.size())
        throw InvalidArgument("confusion: prediction/truth length mismatch");
    ConfusionMatrix m;
    m.num_classes = num_classes;
    m.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (truths[i] < 0 || truths[i] >= num_classes || preds[i] < 0 || preds[i] >= num_classes)
            throw InvalidArgument("confusion: class id out of range");
        ++m.at(truths[i], preds[i]);
    }
    return m;
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.empty()) throw InvalidArgument("accuracy of empty prediction list");
    if (preds.size() != truths.size())
        throw InvalidArgument("accuracy: prediction/truth length mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == truths[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

namespace {

// indices sorted by score descending; ties grouped together by the callers
std::vector<std::size_t> order_by_score_desc(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

} // namespace

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("roc_auc: length mismatch");
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const auto neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw InvalidArgument("roc_auc requires both labels present");

    const auto order = order_by_score_desc(scores);

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    double tp = 0, fp = 0;
    double auc = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        // advance over the whole tie group at this threshold
        std::size_t j = i;
        double dtp = 0, dfp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1)
                ++dtp;
            else
                ++dfp;
            ++j;
        }
        const double fpr0 = fp / neg, tpr0 = tp / pos;
        tp += dtp;
        fp += dfp;
        const double fpr1 = fp / neg, tpr1 = tp / pos;
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
        curve.points.emplace_back(fpr1, tpr1);
        i = j;
    }
    curve.auc = auc;
    return curve;
}

PrCurve pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw InvalidArgument("pr_auc: length mismatch");
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    if (pos == 0) throw InvalidArgument("pr_auc requires at least one positive");

    const auto order = order_by_score_desc(scores);

    PrCurve curve;
    double tp = 0, predicted = 0;
    double auc = 0.0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        double dtp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] == 1) ++dtp;
            ++j;
        }
        tp += dtp;
        predicted += static_cast<double>(j - i);
        const double recall = tp / pos;
        const double precision = tp / predicted;
        auc += (recall - prev_recall) * precision;
        curve.points.emplace_back(recall, precision);
        prev_recall = recall;
        i = j;
    }
    curve.auc = auc;
    return curve;
}

double jaccard(const MaskImage& a, const MaskImage& b) {
    if (a.width != b.width || a.height != b.height)
        throw InvalidArgument("jaccard: mask dimension mismatch");
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool fa = a.pixels[i] != 0, fb = b.pixels[i] != 0;
        inter += fa && fb;
        uni += fa || fb;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace retina::metrics
