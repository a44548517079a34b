#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedids/dataio.hpp"
#include "fedids/fedsim.hpp"
#include "fedids/xai.hpp"
#include "json.hpp"

namespace fedids::experiment {

// Every problem found while validating a config, reported together.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

enum class ExperimentMode { federated, centralized, sweep };
std::string to_string(ExperimentMode mode);

struct DatasetConfig {
    std::string path;        // CSV, relative paths resolve against the config file's directory
    std::string schema;      // schema JSON, same resolution rule
    std::size_t max_rows = 0;  // stratified subsample when > 0
    double test_fraction = 0.2;
    // Seed for subsampling and the train/test split; the experiment seed when unset.
    std::optional<std::uint64_t> split_seed;

    bool operator==(const DatasetConfig&) const = default;
};

struct SweepAxes {
    std::vector<std::size_t> clients;
    std::vector<double> fraction_fit;
    std::vector<std::size_t> local_epochs;

    bool operator==(const SweepAxes&) const = default;
};

struct ExplainConfig {
    bool enabled = false;
    std::size_t background_size = 100;
    std::size_t max_instances = 500;
    std::size_t permutations = 16;
    std::size_t exact_max_features = 10;

    bool operator==(const ExplainConfig&) const = default;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<std::size_t> hidden_units{80, 40, 30, 20, 10};
    ExperimentMode mode = ExperimentMode::federated;
    // n_clients, fraction_fit, local_epochs, max_rounds, convergence, target, plus the shared
    // training settings (batch_size, threshold, optimizer). Its seed mirrors `seed`.
    fedsim::FLConfig federated;
    std::size_t centralized_epochs = 10;
    std::optional<SweepAxes> sweep;
    ExplainConfig explain;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    bool record_timing = false;

    bool operator==(const ExperimentConfig&) const = default;
};

// Parses and validates; throws ConfigError listing every problem.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);
std::vector<std::string> validate(const ExperimentConfig& cfg);

// Hash of the canonical config text; names the output directory of a run.
std::string run_id(const ExperimentConfig& cfg);
// output_dir/run-<id>; a relative output_dir resolves against base_dir like the dataset paths.
std::filesystem::path run_directory(const ExperimentConfig& cfg, const std::filesystem::path& base_dir);

struct PreparedData {
    dataio::SchemaConfig schema;
    dataio::PreparedDataset train;
    dataio::PreparedDataset test;
};

// Load, optional subsample, stratified split, fit on train, replay on test.
PreparedData prepare_data(const ExperimentConfig& cfg, const std::filesystem::path& base_dir);

struct RunOptions {
    bool verbose = false;
};

struct ExperimentResult {
    std::filesystem::path run_dir;
    fedsim::RunReport report;
    std::optional<xai::ShapMatrix> shap;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& base_dir,
                                const RunOptions& options = {});
ExperimentResult run_experiment(const std::filesystem::path& config_path, const RunOptions& options = {});

struct SweepRow {
    std::size_t clients = 0;
    double fraction_fit = 0.0;
    std::size_t local_epochs = 0;
    std::uint64_t seed = 0;
    metrics::MetricsBundle final_metrics;
    std::size_t rounds_to_convergence = 0;
    std::size_t rounds_run = 0;
    std::string run_id;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    std::filesystem::path sweep_dir;
};

// Seed of one sweep row: base seed plus a stable hash of the axis values.
std::uint64_t sweep_row_seed(std::uint64_t base_seed, std::size_t clients, double fraction_fit,
                             std::size_t local_epochs);

SweepTable run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& base_dir,
                     const RunOptions& options = {});
SweepTable run_sweep(const std::filesystem::path& config_path, const RunOptions& options = {});

// Explains `params` on a seeded sample of test rows against a background drawn from train.
xai::ShapMatrix explain_model(const nn::ModelParams& params, const PreparedData& data, const ExplainConfig& cfg,
                              std::uint64_t seed);
void write_explanations(const std::filesystem::path& dir, const xai::ShapMatrix& shap);

nlohmann::json report_to_json(const fedsim::RunReport& report, const ExperimentConfig& cfg, const PreparedData& data);
void write_rounds_csv(const std::filesystem::path& path, const fedsim::RunReport& report);

struct AnomalyRule {
    std::size_t informative_feature = 0;
    double threshold = 0.0;
    double noise = 0.05;  // probability of flipping the planted label
};

struct SyntheticSpec {
    std::size_t n_samples = 1000;
    std::size_t n_features = 5;
    std::uint64_t seed = 0;
    AnomalyRule rule;
    std::string name = "synthetic";
};

struct SyntheticFiles {
    std::filesystem::path csv;
    std::filesystem::path schema;
};

// Writes <name>.csv and <name>.schema.json. Column f<i> for i = rule.informative_feature
// drives the label; the rest mix numeric, one-hot, boolean and ordinal noise.
SyntheticFiles generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace fedids::experiment
