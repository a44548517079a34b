#include "fedids/xai.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>

namespace fedids::xai {
namespace {

constexpr std::size_t kMaxBatchRows = 1 << 15;

// Mean taken as an offset from the first value, so k equal values average to that value exactly.
double mean(const double* v, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 1; i < k; ++i) s += v[i] - v[0];
    return v[0] + s / static_cast<double>(k);
}

double mean(const std::vector<double>& v) { return mean(v.data(), v.size()); }

void check_width(std::span<const double> instance, const BackgroundSet& background) {
    if (background.size() == 0) throw Error("explain: empty background set");
    if (instance.size() != background.width()) {
        throw ShapeError("explain: instance width " + std::to_string(instance.size()) +
                         " does not match background width " + std::to_string(background.width()));
    }
}

double model_on_instance(const Model& model, std::span<const double> instance) {
    Matrix one(1, instance.size());
    std::copy(instance.begin(), instance.end(), one.values.begin());
    auto out = model(one);
    if (out.size() != 1) throw ShapeError("explain: model returned the wrong number of outputs");
    return out[0];
}

// Values of many coalitions, each a bitmask over features. Full and empty coalitions are
// special-cased so that v(N) is the model output itself and v(empty) is the background mean.
std::vector<double> coalition_values(const Model& model, std::span<const double> instance,
                                     const BackgroundSet& background, std::span<const std::uint64_t> masks,
                                     double full_value, double empty_value) {
    const std::size_t d = instance.size();
    const std::size_t k = background.size();
    const std::uint64_t full = d == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1;
    std::vector<double> out(masks.size());
    const std::size_t per_batch = std::max<std::size_t>(1, kMaxBatchRows / k);

    std::vector<std::size_t> pending;
    for (std::size_t m = 0; m < masks.size(); ++m) {
        if (masks[m] == full) out[m] = full_value;
        else if (masks[m] == 0) out[m] = empty_value;
        else pending.push_back(m);
    }
    for (std::size_t start = 0; start < pending.size(); start += per_batch) {
        const std::size_t count = std::min(per_batch, pending.size() - start);
        Matrix batch(count * k, d);
        for (std::size_t c = 0; c < count; ++c) {
            const auto mask = masks[pending[start + c]];
            for (std::size_t b = 0; b < k; ++b) {
                auto row = batch.row(c * k + b);
                auto bg = background.rows.row(b);
                for (std::size_t f = 0; f < d; ++f) row[f] = (mask >> f) & 1 ? instance[f] : bg[f];
            }
        }
        auto outputs = model(batch);
        if (outputs.size() != batch.rows) throw ShapeError("explain: model returned the wrong number of outputs");
        for (std::size_t c = 0; c < count; ++c) {
            out[pending[start + c]] = mean(outputs.data() + c * k, k);
        }
    }
    return out;
}

double background_mean(const Model& model, const BackgroundSet& background) {
    auto out = model(background.rows);
    if (out.size() != background.size()) throw ShapeError("explain: model returned the wrong number of outputs");
    return mean(out);
}

}  // namespace

Model probability_model(nn::ModelParams params) {
    auto shared = std::make_shared<const nn::ModelParams>(std::move(params));
    return [shared](const Matrix& batch) { return nn::forward(*shared, batch); };
}

BackgroundSet sample_background(const Matrix& data, std::size_t k, std::uint64_t seed) {
    if (data.rows == 0) throw Error("sample_background: no data");
    if (k == 0) throw Error("sample_background: k must be >= 1");
    std::vector<std::size_t> idx(data.rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k < data.rows) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
    }
    return {data.select_rows(idx)};
}

double coalition_value(const Model& model, std::span<const double> instance, const BackgroundSet& background,
                       const Coalition& coalition) {
    check_width(instance, background);
    if (coalition.size() != instance.size()) throw ShapeError("coalition_value: coalition width mismatch");
    const bool all = std::all_of(coalition.begin(), coalition.end(), [](bool b) { return b; });
    if (all) return model_on_instance(model, instance);
    const bool none = std::none_of(coalition.begin(), coalition.end(), [](bool b) { return b; });
    if (none) return background_mean(model, background);

    Matrix batch = background.rows;
    for (std::size_t b = 0; b < batch.rows; ++b) {
        auto row = batch.row(b);
        for (std::size_t f = 0; f < row.size(); ++f) {
            if (coalition[f]) row[f] = instance[f];
        }
    }
    auto out = model(batch);
    if (out.size() != batch.rows) throw ShapeError("coalition_value: model returned the wrong number of outputs");
    return mean(out);
}

ShapVector shap_exact(const Model& model, std::span<const double> instance, const BackgroundSet& background) {
    check_width(instance, background);
    const std::size_t d = instance.size();
    if (d == 0) throw ShapeError("shap_exact: no features");
    if (d > kMaxExactFeatures) {
        throw Error("shap_exact: " + std::to_string(d) + " features exceeds the exact-mode limit of " +
                    std::to_string(kMaxExactFeatures));
    }
    ShapVector out;
    out.model_output = model_on_instance(model, instance);
    out.base_value = background_mean(model, background);

    const std::uint64_t n_masks = std::uint64_t{1} << d;
    std::vector<std::uint64_t> masks(n_masks);
    std::iota(masks.begin(), masks.end(), std::uint64_t{0});
    const auto v = coalition_values(model, instance, background, masks, out.model_output, out.base_value);

    // |S|! (d - |S| - 1)! / d!
    std::vector<double> factorial(d + 1, 1.0);
    for (std::size_t i = 1; i <= d; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
    std::vector<double> weight(d);
    for (std::size_t s = 0; s < d; ++s) weight[s] = factorial[s] * factorial[d - s - 1] / factorial[d];

    out.phi.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        double phi = 0.0;
        for (std::uint64_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            phi += weight[size] * (v[mask | bit] - v[mask]);
        }
        out.phi[i] = phi;
    }
    return out;
}

ShapVector shap_sampled(const Model& model, std::span<const double> instance, const BackgroundSet& background,
                        std::size_t n_permutations, std::uint64_t seed) {
    check_width(instance, background);
    if (n_permutations == 0) throw Error("shap_sampled: n_permutations must be >= 1");
    const std::size_t d = instance.size();
    if (d == 0) throw ShapeError("shap_sampled: no features");

    ShapVector out;
    out.model_output = model_on_instance(model, instance);
    out.base_value = background_mean(model, background);
    out.phi.assign(d, 0.0);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Prefix coalitions of one permutation, as explicit flags (d may exceed 64).
    Matrix batch;
    for (std::size_t p = 0; p < n_permutations; ++p) {
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t k = background.size();
        std::vector<double> prefix_value(d + 1);
        prefix_value[0] = out.base_value;
        prefix_value[d] = out.model_output;

        const std::size_t prefixes = d - 1;  // sizes 1 .. d-1
        const std::size_t per_batch = std::max<std::size_t>(1, kMaxBatchRows / k);
        std::vector<double> current_rows = background.rows.values;  // k x d working copy
        for (std::size_t start = 0; start < prefixes; start += per_batch) {
            const std::size_t count = std::min(per_batch, prefixes - start);
            batch = Matrix(count * k, d);
            for (std::size_t c = 0; c < count; ++c) {
                const std::size_t feature = order[start + c];
                for (std::size_t b = 0; b < k; ++b) current_rows[b * d + feature] = instance[feature];
                std::copy(current_rows.begin(), current_rows.end(),
                          batch.values.begin() + static_cast<long>(c * k * d));
            }
            auto outputs = model(batch);
            if (outputs.size() != batch.rows) throw ShapeError("shap_sampled: model returned the wrong number of outputs");
            for (std::size_t c = 0; c < count; ++c) {
                prefix_value[start + c + 1] = mean(outputs.data() + c * k, k);
            }
        }
        for (std::size_t j = 0; j < d; ++j) out.phi[order[j]] += prefix_value[j + 1] - prefix_value[j];
    }
    for (auto& phi : out.phi) phi /= static_cast<double>(n_permutations);

    double sum = 0.0;
    double abs_sum = 0.0;
    for (double phi : out.phi) {
        sum += phi;
        abs_sum += std::abs(phi);
    }
    const double residual = out.model_output - out.base_value - sum;
    if (residual != 0.0) {
        for (auto& phi : out.phi) {
            phi += abs_sum > 0.0 ? residual * std::abs(phi) / abs_sum : residual / static_cast<double>(d);
        }
        out.adjusted = true;
    }
    return out;
}

ShapMatrix explain(const Model& model, const Matrix& instances, std::span<const std::size_t> instance_ids,
                   const BackgroundSet& background, const std::vector<std::string>& feature_names,
                   const ExplainOptions& options) {
    if (instance_ids.size() != instances.rows) throw ShapeError("explain: instance id count mismatch");
    if (feature_names.size() != instances.cols) throw ShapeError("explain: feature name count mismatch");
    const bool exact = instances.cols <= std::min(options.exact_max_features, kMaxExactFeatures);
    ShapMatrix out;
    out.feature_names = feature_names;
    out.feature_values = instances;
    out.rows.resize(instances.rows);
    parallel_for(instances.rows, [&](std::size_t i) {
        auto row = instances.row(i);
        out.rows[i] = exact ? shap_exact(model, row, background)
                            : shap_sampled(model, row, background, options.permutations,
                                           derive_seed(options.seed, instance_ids[i]));
        out.rows[i].instance_id = instance_ids[i];
    });
    return out;
}

std::vector<FeatureImportance> global_importance(const ShapMatrix& shap) {
    if (shap.rows.empty()) throw Error("global_importance: empty explanation set");
    const std::size_t d = shap.n_features();
    std::vector<FeatureImportance> out(d);
    for (std::size_t f = 0; f < d; ++f) {
        double s = 0.0;
        for (const auto& r : shap.rows) {
            if (r.phi.size() != d) throw ShapeError("global_importance: ragged explanation matrix");
            s += std::abs(r.phi[f]);
        }
        out[f] = {shap.feature_names[f], s / static_cast<double>(shap.rows.size())};
    }
    std::sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
        if (a.mean_abs_shap != b.mean_abs_shap) return a.mean_abs_shap > b.mean_abs_shap;
        return a.feature < b.feature;
    });
    return out;
}

std::vector<BeeswarmPoint> beeswarm_export(const ShapMatrix& shap) {
    const auto ranking = global_importance(shap);
    const std::size_t d = shap.n_features();
    if (shap.feature_values.rows != shap.rows.size() || shap.feature_values.cols != d) {
        throw ShapeError("beeswarm_export: feature values do not match the explanation matrix");
    }
    std::vector<BeeswarmPoint> out;
    out.reserve(shap.rows.size() * d);
    for (const auto& item : ranking) {
        const auto f = static_cast<std::size_t>(
            std::find(shap.feature_names.begin(), shap.feature_names.end(), item.feature) - shap.feature_names.begin());
        double lo = shap.feature_values(0, f);
        double hi = lo;
        for (std::size_t r = 0; r < shap.feature_values.rows; ++r) {
            lo = std::min(lo, shap.feature_values(r, f));
            hi = std::max(hi, shap.feature_values(r, f));
        }
        for (std::size_t r = 0; r < shap.rows.size(); ++r) {
            const double x = shap.feature_values(r, f);
            const double norm = hi > lo ? (x - lo) / (hi - lo) : 0.5;
            out.push_back({item.feature, shap.rows[r].phi[f], norm, shap.rows[r].instance_id});
        }
    }
    return out;
}

void write_beeswarm_csv(const std::filesystem::path& path, const std::vector<BeeswarmPoint>& points) {
    std::ofstream out(path);
    if (!out) throw Error(path.string() + ": cannot open for writing");
    out << "feature,shap_value,normalized_value,instance_id\n";
    for (const auto& p : points) {
        out << csv_escape(p.feature) << ',' << format_double(p.shap_value) << ','
            << format_double(p.normalized_value) << ',' << p.instance_id << '\n';
    }
}

void write_bar_csv(const std::filesystem::path& path, const std::vector<FeatureImportance>& ranking) {
    std::ofstream out(path);
    if (!out) throw Error(path.string() + ": cannot open for writing");
    out << "feature,mean_abs_shap,rank\n";
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        out << csv_escape(ranking[i].feature) << ',' << format_double(ranking[i].mean_abs_shap) << ',' << i + 1
            << '\n';
    }
}

}  // namespace fedids::xai
