#include "fedids/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace fedids::metrics {

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) throw ShapeError("confusion: predictions and labels differ in length");
    if (predictions.empty()) throw ShapeError("confusion: no samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = predictions[i] == 1;
        const bool actual = labels[i] == 1;
        if (pred && actual) ++cm.tp;
        else if (!pred && !actual) ++cm.tn;
        else if (pred) ++cm.fp;
        else ++cm.fn;
    }
    return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw Error("classification_metrics: empty confusion matrix");
    ClassificationMetrics m;
    const auto tp = static_cast<double>(cm.tp);
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    if (cm.tp + cm.fp > 0) m.precision = tp / static_cast<double>(cm.tp + cm.fp);
    else m.precision_degenerate = true;
    if (cm.tp + cm.fn > 0) m.recall = tp / static_cast<double>(cm.tp + cm.fn);
    else m.recall_degenerate = true;
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else m.f1_degenerate = true;
    return m;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
    std::size_t positives = 0;
    for (int y : labels) positives += y == 1 ? 1 : 0;
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) throw Error("roc_auc: both classes must be present");

    // Mann-Whitney U via average ranks over tie groups.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t group_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            group_pos += labels[order[j]] == 1 ? 1 : 0;
            ++j;
        }
        // ranks i+1 .. j, average (i + 1 + j) / 2
        positive_rank_sum += static_cast<double>(group_pos) * (static_cast<double>(i + 1 + j) / 2.0);
        i = j;
    }
    const double np = static_cast<double>(positives);
    const double nn = static_cast<double>(negatives);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

}  // namespace fedids::metrics
