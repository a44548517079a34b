#pragma once

#include <cstdint>
#include <span>

#include "fedids/common.hpp"

namespace fedids::metrics {

// Positive class is 1 (anomaly).
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Set when the corresponding ratio had a zero denominator and was reported as 0.
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;

    bool degenerate() const { return precision_degenerate || recall_degenerate || f1_degenerate; }
};

struct MetricsBundle {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    double loss = 0.0;
    ConfusionMatrix confusion;
    bool degenerate = false;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

// Probability that a random positive outscores a random negative; ties count 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace fedids::metrics
