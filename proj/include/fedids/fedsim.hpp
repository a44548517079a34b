#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedids/dataio.hpp"
#include "fedids/metrics.hpp"
#include "fedids/nn.hpp"

namespace fedids::fedsim {

enum class StopMode { fixed_rounds, early_stopping };
enum class ConvergenceMetric { accuracy, loss };

std::string to_string(StopMode mode);
std::string to_string(ConvergenceMetric metric);

// A round "improves" when the tracked test metric beats the best so far by at least min_delta.
// Early stopping ends the run after `patience` consecutive non-improving rounds. In both modes
// rounds_to_convergence is the last improving round.
struct ConvergenceCriterion {
    StopMode mode = StopMode::early_stopping;
    ConvergenceMetric metric = ConvergenceMetric::accuracy;
    double min_delta = 1e-4;
    std::size_t patience = 5;

    bool operator==(const ConvergenceCriterion&) const = default;
};

// Optional thresholds; the first round meeting all of them is reported as rounds_to_target.
struct TargetMetrics {
    std::optional<double> accuracy;
    std::optional<double> f1;
    std::optional<double> auc;

    bool any() const { return accuracy || f1 || auc; }
    bool met_by(const metrics::MetricsBundle& m) const;
    bool operator==(const TargetMetrics&) const = default;
};

struct FLConfig {
    std::size_t n_clients = 8;
    double fraction_fit = 1.0;
    std::size_t local_epochs = 1;
    std::size_t max_rounds = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    ConvergenceCriterion convergence;
    TargetMetrics target;
    nn::AdamConfig optimizer;
    double threshold = 0.5;

    // Human-readable violations, empty when valid.
    std::vector<std::string> problems() const;
    void validate() const;
    bool operator==(const FLConfig&) const = default;
};

struct ClientUpdate {
    std::size_t client_id = 0;
    nn::ModelParams params;
    std::size_t sample_count = 0;
    double final_loss = 0.0;
};

struct RoundLog {
    std::size_t round = 0;  // 1-based
    std::vector<std::size_t> selected_clients;
    metrics::MetricsBundle metrics;
    double wall_time_seconds = 0.0;
};

enum class RunMode { federated, centralized };
std::string to_string(RunMode mode);

struct RunReport {
    RunMode mode = RunMode::federated;
    FLConfig config;
    std::vector<RoundLog> rounds;
    nn::ModelParams final_params;
    std::size_t rounds_to_convergence = 0;
    std::optional<std::size_t> rounds_to_target;
    bool stopped_early = false;

    const metrics::MetricsBundle& final_metrics() const { return rounds.back().metrics; }
};

using RoundObserver = std::function<void(const RoundLog&)>;

// Seed streams shared by the federated and centralized paths.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t local_training_seed(std::uint64_t seed, std::size_t round, std::size_t client_id);

// max(1, round(M * Fr)) capped at M.
std::size_t selected_count(std::size_t n_clients, double fraction_fit);

// Uniform subset without replacement, sorted ascending; deterministic per (seed, round).
std::vector<std::size_t> select_clients(std::size_t n_clients, double fraction_fit, std::uint64_t seed,
                                        std::size_t round);

// Trains a copy of `global_params` with a fresh Adam state.
ClientUpdate client_update(const nn::ModelParams& global_params, const dataio::ClientPartition& partition,
                           std::size_t local_epochs, std::size_t batch_size, const nn::AdamConfig& optimizer,
                           std::uint64_t seed);

// Sample-count-weighted mean, summed in client-id order. Equal counts use the plain mean.
nn::ModelParams aggregate_fedavg(std::span<const ClientUpdate> updates);

metrics::MetricsBundle evaluate(const nn::ModelParams& params, const Matrix& features, const Labels& labels,
                                double threshold = 0.5);

RunReport run_federated(std::span<const dataio::ClientPartition> partitions, const dataio::PreparedDataset& test,
                        const nn::Architecture& arch, const FLConfig& cfg, const RoundObserver& observer = {});

struct CentralizedConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    nn::AdamConfig optimizer;
    double threshold = 0.5;
    // Used only to compute rounds_to_convergence; training always runs every epoch.
    ConvergenceCriterion convergence{StopMode::fixed_rounds};
    TargetMetrics target;
};

RunReport run_centralized(const dataio::PreparedDataset& train, const dataio::PreparedDataset& test,
                          const nn::Architecture& arch, const CentralizedConfig& cfg,
                          const RoundObserver& observer = {});

}  // namespace fedids::fedsim
