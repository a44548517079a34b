#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedids/common.hpp"
#include "fedids/nn.hpp"

namespace fedids::xai {

// Any batch model: one output per input row.
using Model = std::function<std::vector<double>(const Matrix&)>;

// Pre-threshold probability output of a trained network.
Model probability_model(nn::ModelParams params);

// Reference rows used to fill absent features.
struct BackgroundSet {
    Matrix rows;  // k x d

    std::size_t size() const { return rows.rows; }
    std::size_t width() const { return rows.cols; }
};

// Uniform sample of up to k rows, without replacement, in ascending row order.
BackgroundSet sample_background(const Matrix& data, std::size_t k, std::uint64_t seed);

// Coalition membership, one flag per feature.
using Coalition = std::vector<bool>;

struct ShapVector {
    std::size_t instance_id = 0;
    std::vector<double> phi;
    double base_value = 0.0;
    double model_output = 0.0;
    // True when the efficiency residual was redistributed (sampled mode only).
    bool adjusted = false;
};

struct ShapMatrix {
    std::vector<std::string> feature_names;
    std::vector<ShapVector> rows;
    Matrix feature_values;  // rows.size() x d, the explained instances

    std::size_t n_features() const { return feature_names.size(); }
};

// Mean model output over background rows with coalition features taken from `instance`.
double coalition_value(const Model& model, std::span<const double> instance, const BackgroundSet& background,
                       const Coalition& coalition);

inline constexpr std::size_t kMaxExactFeatures = 15;

ShapVector shap_exact(const Model& model, std::span<const double> instance, const BackgroundSet& background);

ShapVector shap_sampled(const Model& model, std::span<const double> instance, const BackgroundSet& background,
                        std::size_t n_permutations, std::uint64_t seed);

struct ExplainOptions {
    std::size_t permutations = 16;
    std::size_t exact_max_features = 10;  // exact enumeration at or below this width
    std::uint64_t seed = 0;
};

// Explains every row of `instances`; rows are independent and run in parallel.
ShapMatrix explain(const Model& model, const Matrix& instances, std::span<const std::size_t> instance_ids,
                   const BackgroundSet& background, const std::vector<std::string>& feature_names,
                   const ExplainOptions& options);

struct FeatureImportance {
    std::string feature;
    double mean_abs_shap = 0.0;
};

// Descending mean |phi|; ties broken alphabetically.
std::vector<FeatureImportance> global_importance(const ShapMatrix& shap);

struct BeeswarmPoint {
    std::string feature;
    double shap_value = 0.0;
    double normalized_value = 0.0;  // min-max over explained instances, 0.5 when constant
    std::size_t instance_id = 0;
};

std::vector<BeeswarmPoint> beeswarm_export(const ShapMatrix& shap);

void write_beeswarm_csv(const std::filesystem::path& path, const std::vector<BeeswarmPoint>& points);
void write_bar_csv(const std::filesystem::path& path, const std::vector<FeatureImportance>& ranking);

}  // namespace fedids::xai
