#include "fedids/fedsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace fedids::fedsim {
namespace {

class ConvergenceTracker {
public:
    explicit ConvergenceTracker(const ConvergenceCriterion& criterion) : criterion_(criterion) {}

    // Records one round; returns true when early stopping says to halt.
    bool observe(std::size_t round, const metrics::MetricsBundle& m) {
        const bool higher_is_better = criterion_.metric == ConvergenceMetric::accuracy;
        const double value = higher_is_better ? m.accuracy : m.loss;
        const double improvement = !has_best_       ? std::numeric_limits<double>::infinity()
                                   : higher_is_better ? value - best_
                                                      : best_ - value;
        if (improvement > 0.0 && improvement >= criterion_.min_delta) {
            best_ = value;
            has_best_ = true;
            last_improving_ = round;
            stale_ = 0;
        } else {
            ++stale_;
        }
        return criterion_.mode == StopMode::early_stopping && stale_ >= criterion_.patience;
    }

    std::size_t last_improving_round() const { return last_improving_; }

private:
    ConvergenceCriterion criterion_;
    bool has_best_ = false;
    double best_ = 0.0;
    std::size_t last_improving_ = 0;
    std::size_t stale_ = 0;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string to_string(StopMode mode) {
    return mode == StopMode::fixed_rounds ? "fixed_rounds" : "early_stopping";
}

std::string to_string(ConvergenceMetric metric) {
    return metric == ConvergenceMetric::accuracy ? "accuracy" : "loss";
}

std::string to_string(RunMode mode) {
    return mode == RunMode::federated ? "federated" : "centralized";
}

bool TargetMetrics::met_by(const metrics::MetricsBundle& m) const {
    if (!any()) return false;
    if (accuracy && m.accuracy < *accuracy) return false;
    if (f1 && m.f1 < *f1) return false;
    if (auc && m.auc < *auc) return false;
    return true;
}

std::vector<std::string> FLConfig::problems() const {
    std::vector<std::string> out;
    if (n_clients == 0) out.push_back("n_clients must be >= 1");
    if (!(fraction_fit > 0.0 && fraction_fit <= 1.0)) out.push_back("fraction_fit must lie in (0, 1]");
    if (local_epochs == 0) out.push_back("local_epochs must be >= 1");
    if (max_rounds == 0) out.push_back("max_rounds must be >= 1");
    if (batch_size == 0) out.push_back("batch_size must be >= 1");
    if (convergence.mode == StopMode::early_stopping && convergence.patience == 0) {
        out.push_back("convergence.patience must be >= 1 in early_stopping mode");
    }
    if (!(convergence.min_delta >= 0.0)) out.push_back("convergence.min_delta must be >= 0");
    if (!(threshold > 0.0 && threshold < 1.0)) out.push_back("threshold must lie in (0, 1)");
    try {
        optimizer.validate();
    } catch (const Error& e) {
        out.push_back(e.what());
    }
    return out;
}

void FLConfig::validate() const {
    auto issues = problems();
    if (issues.empty()) return;
    std::ostringstream msg;
    msg << "invalid federated configuration:";
    for (const auto& p : issues) msg << "\n  - " << p;
    throw Error(msg.str());
}

std::uint64_t init_seed(std::uint64_t seed) { return derive_seed(seed, "init"); }

std::uint64_t local_training_seed(std::uint64_t seed, std::size_t round, std::size_t client_id) {
    return derive_seed(derive_seed(derive_seed(seed, "client"), round), client_id);
}

std::size_t selected_count(std::size_t n_clients, double fraction_fit) {
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n_clients) * fraction_fit));
    return std::clamp<std::size_t>(k, 1, n_clients);
}

std::vector<std::size_t> select_clients(std::size_t n_clients, double fraction_fit, std::uint64_t seed,
                                        std::size_t round) {
    if (n_clients == 0) throw Error("select_clients: n_clients must be >= 1");
    if (!(fraction_fit > 0.0 && fraction_fit <= 1.0)) throw Error("select_clients: fraction_fit must lie in (0,1]");
    const std::size_t k = selected_count(n_clients, fraction_fit);
    std::vector<std::size_t> ids(n_clients);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(derive_seed(seed, "select"), round));
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
    return ids;
}

ClientUpdate client_update(const nn::ModelParams& global_params, const dataio::ClientPartition& partition,
                           std::size_t local_epochs, std::size_t batch_size, const nn::AdamConfig& optimizer,
                           std::uint64_t seed) {
    if (partition.sample_count() == 0) throw Error("client_update: empty partition");
    auto result = nn::train_epochs(global_params, partition.features, partition.labels, local_epochs, batch_size,
                                   nn::make_adam_state(global_params, optimizer), seed);
    return {partition.client_id, std::move(result.params), partition.sample_count(), result.final_loss};
}

nn::ModelParams aggregate_fedavg(std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw Error("aggregate_fedavg: no client updates");
    std::vector<const ClientUpdate*> ordered;
    for (const auto& u : updates) ordered.push_back(&u);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

    const auto arch = ordered.front()->params.architecture();
    std::vector<std::vector<double>> flat;
    for (const auto* u : ordered) {
        if (u->params.architecture() != arch) throw ShapeError("aggregate_fedavg: client updates differ in shape");
        if (u->sample_count == 0) throw Error("aggregate_fedavg: client update with zero samples");
        flat.push_back(nn::flatten(u->params));
    }

    const bool equal_counts = std::all_of(ordered.begin(), ordered.end(), [&](const ClientUpdate* u) {
        return u->sample_count == ordered.front()->sample_count;
    });
    double total = 0.0;
    for (const auto* u : ordered) total += static_cast<double>(u->sample_count);
    std::vector<double> weight(ordered.size());
    for (std::size_t k = 0; k < ordered.size(); ++k) weight[k] = static_cast<double>(ordered[k]->sample_count) / total;
    const auto clients = static_cast<double>(ordered.size());

    std::vector<double> out(flat.front().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double sum = 0.0;
        double lo = flat[0][i];
        double hi = flat[0][i];
        for (std::size_t k = 0; k < flat.size(); ++k) {
            const double w = flat[k][i];
            sum += equal_counts ? w : weight[k] * w;
            lo = std::min(lo, w);
            hi = std::max(hi, w);
        }
        // The exact mean lies in [lo, hi]; clamping only removes rounding overshoot.
        out[i] = std::clamp(equal_counts ? sum / clients : sum, lo, hi);
    }
    return nn::unflatten(arch, out);
}

metrics::MetricsBundle evaluate(const nn::ModelParams& params, const Matrix& features, const Labels& labels,
                                double threshold) {
    auto probs = nn::forward(params, features);
    auto preds = nn::threshold_probs(probs, threshold);
    metrics::MetricsBundle b;
    b.confusion = metrics::confusion(preds, labels);
    auto cls = metrics::classification_metrics(b.confusion);
    b.accuracy = cls.accuracy;
    b.precision = cls.precision;
    b.recall = cls.recall;
    b.f1 = cls.f1;
    b.degenerate = cls.degenerate();
    b.auc = metrics::roc_auc(probs, labels);
    b.loss = nn::bce_loss(probs, labels);
    return b;
}

RunReport run_federated(std::span<const dataio::ClientPartition> partitions, const dataio::PreparedDataset& test,
                        const nn::Architecture& arch, const FLConfig& cfg, const RoundObserver& observer) {
    cfg.validate();
    if (partitions.size() != cfg.n_clients) {
        throw Error("run_federated: config expects " + std::to_string(cfg.n_clients) + " clients but " +
                    std::to_string(partitions.size()) + " partitions were supplied");
    }
    for (std::size_t k = 0; k < partitions.size(); ++k) {
        if (partitions[k].client_id != k) throw Error("run_federated: partitions must be ordered by client id");
        if (partitions[k].sample_count() == 0) throw Error("run_federated: empty partition");
    }

    RunReport report;
    report.mode = RunMode::federated;
    report.config = cfg;
    nn::ModelParams global = nn::init_model(arch, init_seed(cfg.seed));
    ConvergenceTracker tracker(cfg.convergence);

    for (std::size_t round = 1; round <= cfg.max_rounds; ++round) {
        const auto start = Clock::now();
        RoundLog log;
        log.round = round;
        log.selected_clients = select_clients(cfg.n_clients, cfg.fraction_fit, cfg.seed, round);

        std::vector<ClientUpdate> updates(log.selected_clients.size());
        parallel_for(updates.size(), [&](std::size_t i) {
            const auto id = log.selected_clients[i];
            updates[i] = client_update(global, partitions[id], cfg.local_epochs, cfg.batch_size, cfg.optimizer,
                                       local_training_seed(cfg.seed, round, id));
        });
        global = aggregate_fedavg(updates);

        log.metrics = evaluate(global, test.features, test.labels, cfg.threshold);
        log.wall_time_seconds = seconds_since(start);
        if (!report.rounds_to_target && cfg.target.met_by(log.metrics)) report.rounds_to_target = round;
        const bool stop = tracker.observe(round, log.metrics);
        report.rounds.push_back(log);
        if (observer) observer(report.rounds.back());
        if (stop) {
            report.stopped_early = true;
            break;
        }
    }
    report.rounds_to_convergence = tracker.last_improving_round();
    report.final_params = std::move(global);
    return report;
}

RunReport run_centralized(const dataio::PreparedDataset& train, const dataio::PreparedDataset& test,
                          const nn::Architecture& arch, const CentralizedConfig& cfg, const RoundObserver& observer) {
    if (cfg.epochs == 0) throw Error("run_centralized: epochs must be >= 1");
    if (train.n_samples() == 0) throw Error("run_centralized: empty training set");

    RunReport report;
    report.mode = RunMode::centralized;
    report.config.n_clients = 1;
    report.config.fraction_fit = 1.0;
    report.config.local_epochs = cfg.epochs;
    report.config.max_rounds = cfg.epochs;
    report.config.batch_size = cfg.batch_size;
    report.config.seed = cfg.seed;
    report.config.convergence = cfg.convergence;
    report.config.target = cfg.target;
    report.config.optimizer = cfg.optimizer;
    report.config.threshold = cfg.threshold;

    ConvergenceTracker tracker(cfg.convergence);
    auto start = Clock::now();
    auto on_epoch = [&](std::size_t epoch, const nn::ModelParams& params, double) {
        RoundLog log;
        log.round = epoch + 1;
        log.selected_clients = {0};
        log.metrics = evaluate(params, test.features, test.labels, cfg.threshold);
        log.wall_time_seconds = seconds_since(start);
        if (!report.rounds_to_target && cfg.target.met_by(log.metrics)) report.rounds_to_target = log.round;
        tracker.observe(log.round, log.metrics);
        report.rounds.push_back(log);
        if (observer) observer(report.rounds.back());
        start = Clock::now();
        return true;
    };
    auto initial = nn::init_model(arch, init_seed(cfg.seed));
    auto optimizer = nn::make_adam_state(initial, cfg.optimizer);
    // Same seed stream as client 0 in round 1, so a single-client federated round matches.
    auto result = nn::train_epochs(std::move(initial), train.features, train.labels, cfg.epochs, cfg.batch_size,
                                   std::move(optimizer), local_training_seed(cfg.seed, 1, 0), on_epoch);
    report.rounds_to_convergence = tracker.last_improving_round();
    report.final_params = std::move(result.params);
    return report;
}

}  // namespace fedids::fedsim
