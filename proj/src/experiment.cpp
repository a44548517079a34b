#include "fedids/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fedids::experiment {

using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string out = "invalid config:";
    for (const auto& p : problems) out += "\n  - " + p;
    return out;
}

// Collects type problems while reading a JSON config; nothing throws midway.
struct Reader {
    std::vector<std::string>& problems;

    void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
        for (const auto& [key, value] : obj.items()) {
            bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
            if (!known) problems.push_back(path + key + ": unknown key");
        }
    }

    const json* object(const json& parent, const char* key, const std::string& path) {
        if (!parent.contains(key)) return nullptr;
        const json& v = parent.at(key);
        if (!v.is_object()) {
            problems.push_back(path + key + ": expected an object");
            return nullptr;
        }
        return &v;
    }

    void count(const json& obj, const char* key, const std::string& path, std::size_t& out) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            problems.push_back(path + key + ": expected a non-negative integer");
            return;
        }
        out = v.get<std::size_t>();
    }

    void seed(const json& obj, const char* key, const std::string& path, std::uint64_t& out) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        if (!v.is_number_unsigned()) {
            problems.push_back(path + key + ": expected a non-negative integer");
            return;
        }
        out = v.get<std::uint64_t>();
    }

    void real(const json& obj, const char* key, const std::string& path, double& out) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        if (!v.is_number()) {
            problems.push_back(path + key + ": expected a number");
            return;
        }
        out = v.get<double>();
    }

    void optional_real(const json& obj, const char* key, const std::string& path, std::optional<double>& out) {
        if (!obj.contains(key) || obj.at(key).is_null()) return;
        double value = 0.0;
        std::size_t before = problems.size();
        real(obj, key, path, value);
        if (problems.size() == before) out = value;
    }

    void boolean(const json& obj, const char* key, const std::string& path, bool& out) {
        if (!obj.contains(key)) return;
        const json& v = obj.at(key);
        if (!v.is_boolean()) {
            problems.push_back(path + key + ": expected true or false");
            return;
        }
        out = v.get<bool>();
    }

    bool string(const json& obj, const char* key, const std::string& path, std::string& out) {
        if (!obj.contains(key)) return false;
        const json& v = obj.at(key);
        if (!v.is_string()) {
            problems.push_back(path + key + ": expected a string");
            return false;
        }
        out = v.get<std::string>();
        return true;
    }

    // Returns true when the key was present (even if empty).
    bool count_list(const json& obj, const char* key, const std::string& path, std::vector<std::size_t>& out) {
        if (!obj.contains(key)) return false;
        const json& v = obj.at(key);
        if (!v.is_array()) {
            problems.push_back(path + key + ": expected a list of integers");
            return true;
        }
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number_unsigned()) {
                problems.push_back(path + key + ": expected a list of non-negative integers");
                return true;
            }
            out.push_back(e.get<std::size_t>());
        }
        return true;
    }

    bool real_list(const json& obj, const char* key, const std::string& path, std::vector<double>& out) {
        if (!obj.contains(key)) return false;
        const json& v = obj.at(key);
        if (!v.is_array()) {
            problems.push_back(path + key + ": expected a list of numbers");
            return true;
        }
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) {
                problems.push_back(path + key + ": expected a list of numbers");
                return true;
            }
            out.push_back(e.get<double>());
        }
        return true;
    }
};

ExperimentMode parse_mode(const std::string& text) {
    if (text == "federated") return ExperimentMode::federated;
    if (text == "centralized") return ExperimentMode::centralized;
    if (text == "sweep") return ExperimentMode::sweep;
    throw Error("unknown mode '" + text + "'");
}

std::uint64_t data_seed(const ExperimentConfig& cfg) { return cfg.dataset.split_seed.value_or(cfg.seed); }

std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

template <class T>
bool has_duplicates(std::vector<T> values) {
    std::sort(values.begin(), values.end());
    return std::adjacent_find(values.begin(), values.end()) != values.end();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

json metrics_to_json(const metrics::MetricsBundle& m) {
    return json{{"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"auc", m.auc},
                {"loss", m.loss},
                {"tp", m.confusion.tp},
                {"tn", m.confusion.tn},
                {"fp", m.confusion.fp},
                {"fn", m.confusion.fn},
                {"degenerate", m.degenerate}};
}

// Sorted uniform sample of min(k, n) row indices.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, n);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

nn::Architecture architecture_for(const ExperimentConfig& cfg, const PreparedData& data) {
    nn::Architecture arch;
    arch.input_dim = data.train.n_features();
    arch.hidden_units = cfg.hidden_units;
    arch.validate();
    return arch;
}

fedsim::RoundObserver make_observer(const RunOptions& options, const std::string& tag) {
    if (!options.verbose) return {};
    return [tag](const fedsim::RoundLog& log) {
        const auto& m = log.metrics;
        std::ostringstream line;
        line << tag << "round " << log.round << " clients=" << log.selected_clients.size()
             << " accuracy=" << format_double(m.accuracy) << " f1=" << format_double(m.f1)
             << " auc=" << format_double(m.auc) << " loss=" << format_double(m.loss) << "\n";
        std::cerr << line.str();
    };
}

// Trains per cfg on already prepared data and writes every artifact under the run directory.
ExperimentResult run_prepared(const ExperimentConfig& cfg, const PreparedData& data,
                              const std::filesystem::path& base_dir, const RunOptions& options,
                              const std::string& tag = {}) {
    auto arch = architecture_for(cfg, data);

    fedsim::FLConfig fl = cfg.federated;
    fl.seed = cfg.seed;

    ExperimentResult result;
    if (cfg.mode == ExperimentMode::centralized) {
        fedsim::CentralizedConfig cc;
        cc.epochs = cfg.centralized_epochs;
        cc.batch_size = fl.batch_size;
        cc.seed = cfg.seed;
        cc.optimizer = fl.optimizer;
        cc.threshold = fl.threshold;
        cc.convergence = fl.convergence;
        cc.convergence.mode = fedsim::StopMode::fixed_rounds;
        cc.target = fl.target;
        result.report = fedsim::run_centralized(data.train, data.test, arch, cc, make_observer(options, tag));
    } else {
        auto partitions = dataio::partition_clients(data.train, fl.n_clients, derive_seed(cfg.seed, "partition"));
        result.report = fedsim::run_federated(partitions, data.test, arch, fl, make_observer(options, tag));
    }

    result.run_dir = run_directory(cfg, base_dir);
    std::filesystem::create_directories(result.run_dir);

    write_text(result.run_dir / "report.json", report_to_json(result.report, cfg, data).dump(2) + "\n");
    write_rounds_csv(result.run_dir / "rounds.csv", result.report);
    nn::save_checkpoint(result.run_dir / "model.ckpt", result.report.final_params);
    if (cfg.record_timing) {
        std::ostringstream out;
        out << "round,wall_time_seconds\n";
        for (const auto& r : result.report.rounds) out << r.round << "," << format_double(r.wall_time_seconds) << "\n";
        write_text(result.run_dir / "timing.csv", out.str());
    }
    if (cfg.explain.enabled) {
        result.shap = explain_model(result.report.final_params, data, cfg.explain, cfg.seed);
        write_explanations(result.run_dir, *result.shap);
    }
    return result;
}

std::string axis_label(const SweepRow& row) {
    return "M=" + std::to_string(row.clients) + " Fr=" + format_double(row.fraction_fit) +
           " E=" + std::to_string(row.local_epochs);
}

void write_sweep_csvs(const SweepTable& table) {
    std::ostringstream longform;
    longform << "clients,fraction_fit,local_epochs,seed,accuracy,precision,recall,f1,tp,tn,fp,fn,loss,auc,"
                "rounds_to_convergence,rounds_run,run_id\n";
    for (const auto& r : table.rows) {
        const auto& m = r.final_metrics;
        longform << r.clients << "," << format_double(r.fraction_fit) << "," << r.local_epochs << "," << r.seed << ","
                 << format_double(m.accuracy) << "," << format_double(m.precision) << "," << format_double(m.recall)
                 << "," << format_double(m.f1) << "," << m.confusion.tp << "," << m.confusion.tn << ","
                 << m.confusion.fp << "," << m.confusion.fn << "," << format_double(m.loss) << ","
                 << format_double(m.auc) << "," << r.rounds_to_convergence << "," << r.rounds_run << "," << r.run_id
                 << "\n";
    }
    write_text(table.sweep_dir / "sweep.csv", longform.str());

    // Metrics as rows, one column per axis combination.
    std::ostringstream wide;
    wide << "metric";
    for (const auto& r : table.rows) wide << "," << csv_escape(axis_label(r));
    wide << "\n";
    auto metric_row = [&](const char* name, auto value) {
        wide << name;
        for (const auto& r : table.rows) wide << "," << value(r);
        wide << "\n";
    };
    metric_row("Accuracy", [](const SweepRow& r) { return format_double(r.final_metrics.accuracy); });
    metric_row("Precision", [](const SweepRow& r) { return format_double(r.final_metrics.precision); });
    metric_row("Recall", [](const SweepRow& r) { return format_double(r.final_metrics.recall); });
    metric_row("F1-score", [](const SweepRow& r) { return format_double(r.final_metrics.f1); });
    metric_row("TP", [](const SweepRow& r) { return std::to_string(r.final_metrics.confusion.tp); });
    metric_row("TN", [](const SweepRow& r) { return std::to_string(r.final_metrics.confusion.tn); });
    metric_row("FP", [](const SweepRow& r) { return std::to_string(r.final_metrics.confusion.fp); });
    metric_row("FN", [](const SweepRow& r) { return std::to_string(r.final_metrics.confusion.fn); });
    metric_row("Loss", [](const SweepRow& r) { return format_double(r.final_metrics.loss); });
    metric_row("AUC", [](const SweepRow& r) { return format_double(r.final_metrics.auc); });
    metric_row("Communication rounds", [](const SweepRow& r) { return std::to_string(r.rounds_to_convergence); });
    write_text(table.sweep_dir / "sweep_table.csv", wide.str());
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

std::string to_string(ExperimentMode mode) {
    switch (mode) {
        case ExperimentMode::federated: return "federated";
        case ExperimentMode::centralized: return "centralized";
        case ExperimentMode::sweep: return "sweep";
    }
    return "federated";
}

ExperimentConfig config_from_json(const json& j) {
    std::vector<std::string> problems;
    Reader rd{problems};
    ExperimentConfig cfg;
    if (!j.is_object()) throw ConfigError({"config: expected a JSON object"});

    rd.check_keys(j, "", {"dataset", "architecture", "mode", "seed", "federated", "training", "centralized", "sweep",
                          "explain", "output"});

    if (const json* d = rd.object(j, "dataset", "")) {
        rd.check_keys(*d, "dataset.", {"path", "schema", "max_rows", "test_fraction", "split_seed"});
        rd.string(*d, "path", "dataset.", cfg.dataset.path);
        rd.string(*d, "schema", "dataset.", cfg.dataset.schema);
        rd.count(*d, "max_rows", "dataset.", cfg.dataset.max_rows);
        rd.real(*d, "test_fraction", "dataset.", cfg.dataset.test_fraction);
        if (d->contains("split_seed") && !d->at("split_seed").is_null()) {
            std::uint64_t s = 0;
            std::size_t before = problems.size();
            rd.seed(*d, "split_seed", "dataset.", s);
            if (problems.size() == before) cfg.dataset.split_seed = s;
        }
    } else if (!j.contains("dataset")) {
        problems.push_back("dataset: required");
    }

    if (const json* a = rd.object(j, "architecture", "")) {
        rd.check_keys(*a, "architecture.", {"hidden_units"});
        rd.count_list(*a, "hidden_units", "architecture.", cfg.hidden_units);
    }

    std::string mode_text;
    if (rd.string(j, "mode", "", mode_text)) {
        try {
            cfg.mode = parse_mode(mode_text);
        } catch (const Error&) {
            problems.push_back("mode: must be one of federated, centralized, sweep (got '" + mode_text + "')");
        }
    }
    rd.seed(j, "seed", "", cfg.seed);

    auto& fl = cfg.federated;
    if (const json* f = rd.object(j, "federated", "")) {
        const std::string p = "federated.";
        rd.check_keys(*f, p, {"n_clients", "fraction_fit", "local_epochs", "max_rounds", "convergence", "target"});
        rd.count(*f, "n_clients", p, fl.n_clients);
        rd.real(*f, "fraction_fit", p, fl.fraction_fit);
        rd.count(*f, "local_epochs", p, fl.local_epochs);
        rd.count(*f, "max_rounds", p, fl.max_rounds);
        if (const json* c = rd.object(*f, "convergence", p)) {
            const std::string pc = p + "convergence.";
            rd.check_keys(*c, pc, {"mode", "metric", "min_delta", "patience"});
            std::string text;
            if (rd.string(*c, "mode", pc, text)) {
                if (text == "fixed_rounds") fl.convergence.mode = fedsim::StopMode::fixed_rounds;
                else if (text == "early_stopping") fl.convergence.mode = fedsim::StopMode::early_stopping;
                else problems.push_back(pc + "mode: must be fixed_rounds or early_stopping (got '" + text + "')");
            }
            if (rd.string(*c, "metric", pc, text)) {
                if (text == "accuracy") fl.convergence.metric = fedsim::ConvergenceMetric::accuracy;
                else if (text == "loss") fl.convergence.metric = fedsim::ConvergenceMetric::loss;
                else problems.push_back(pc + "metric: must be accuracy or loss (got '" + text + "')");
            }
            rd.real(*c, "min_delta", pc, fl.convergence.min_delta);
            rd.count(*c, "patience", pc, fl.convergence.patience);
        }
        if (const json* t = rd.object(*f, "target", p)) {
            const std::string pt = p + "target.";
            rd.check_keys(*t, pt, {"accuracy", "f1", "auc"});
            rd.optional_real(*t, "accuracy", pt, fl.target.accuracy);
            rd.optional_real(*t, "f1", pt, fl.target.f1);
            rd.optional_real(*t, "auc", pt, fl.target.auc);
        }
    }

    if (const json* t = rd.object(j, "training", "")) {
        const std::string p = "training.";
        rd.check_keys(*t, p, {"batch_size", "threshold", "optimizer"});
        rd.count(*t, "batch_size", p, fl.batch_size);
        rd.real(*t, "threshold", p, fl.threshold);
        if (const json* o = rd.object(*t, "optimizer", p)) {
            const std::string po = p + "optimizer.";
            rd.check_keys(*o, po, {"learning_rate", "beta1", "beta2", "epsilon"});
            rd.real(*o, "learning_rate", po, fl.optimizer.learning_rate);
            rd.real(*o, "beta1", po, fl.optimizer.beta1);
            rd.real(*o, "beta2", po, fl.optimizer.beta2);
            rd.real(*o, "epsilon", po, fl.optimizer.epsilon);
        }
    }

    if (const json* c = rd.object(j, "centralized", "")) {
        rd.check_keys(*c, "centralized.", {"epochs"});
        rd.count(*c, "epochs", "centralized.", cfg.centralized_epochs);
    }

    if (j.contains("sweep") && !j.at("sweep").is_null()) {
        if (const json* s = rd.object(j, "sweep", "")) {
            const std::string p = "sweep.";
            rd.check_keys(*s, p, {"clients", "fraction_fit", "local_epochs"});
            SweepAxes axes;
            if (rd.count_list(*s, "clients", p, axes.clients) && axes.clients.empty())
                problems.push_back("sweep.clients: axis has zero entries");
            if (rd.real_list(*s, "fraction_fit", p, axes.fraction_fit) && axes.fraction_fit.empty())
                problems.push_back("sweep.fraction_fit: axis has zero entries");
            if (rd.count_list(*s, "local_epochs", p, axes.local_epochs) && axes.local_epochs.empty())
                problems.push_back("sweep.local_epochs: axis has zero entries");
            cfg.sweep = axes;
        }
    }

    if (const json* e = rd.object(j, "explain", "")) {
        const std::string p = "explain.";
        rd.check_keys(*e, p, {"enabled", "background_size", "max_instances", "permutations", "exact_max_features"});
        rd.boolean(*e, "enabled", p, cfg.explain.enabled);
        rd.count(*e, "background_size", p, cfg.explain.background_size);
        rd.count(*e, "max_instances", p, cfg.explain.max_instances);
        rd.count(*e, "permutations", p, cfg.explain.permutations);
        rd.count(*e, "exact_max_features", p, cfg.explain.exact_max_features);
    }

    if (const json* o = rd.object(j, "output", "")) {
        rd.check_keys(*o, "output.", {"dir", "record_timing"});
        rd.string(*o, "dir", "output.", cfg.output_dir);
        rd.boolean(*o, "record_timing", "output.", cfg.record_timing);
    }

    fl.seed = cfg.seed;
    auto semantic = validate(cfg);
    problems.insert(problems.end(), semantic.begin(), semantic.end());
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    const auto& fl = cfg.federated;
    json dataset{{"path", cfg.dataset.path},
                 {"schema", cfg.dataset.schema},
                 {"max_rows", cfg.dataset.max_rows},
                 {"test_fraction", cfg.dataset.test_fraction}};
    if (cfg.dataset.split_seed) dataset["split_seed"] = *cfg.dataset.split_seed;

    json target = json::object();
    if (fl.target.accuracy) target["accuracy"] = *fl.target.accuracy;
    if (fl.target.f1) target["f1"] = *fl.target.f1;
    if (fl.target.auc) target["auc"] = *fl.target.auc;

    json j{{"dataset", dataset},
           {"architecture", {{"hidden_units", cfg.hidden_units}}},
           {"mode", to_string(cfg.mode)},
           {"seed", cfg.seed},
           {"federated",
            {{"n_clients", fl.n_clients},
             {"fraction_fit", fl.fraction_fit},
             {"local_epochs", fl.local_epochs},
             {"max_rounds", fl.max_rounds},
             {"convergence",
              {{"mode", fedsim::to_string(fl.convergence.mode)},
               {"metric", fedsim::to_string(fl.convergence.metric)},
               {"min_delta", fl.convergence.min_delta},
               {"patience", fl.convergence.patience}}},
             {"target", target}}},
           {"training",
            {{"batch_size", fl.batch_size},
             {"threshold", fl.threshold},
             {"optimizer",
              {{"learning_rate", fl.optimizer.learning_rate},
               {"beta1", fl.optimizer.beta1},
               {"beta2", fl.optimizer.beta2},
               {"epsilon", fl.optimizer.epsilon}}}}},
           {"centralized", {{"epochs", cfg.centralized_epochs}}},
           {"explain",
            {{"enabled", cfg.explain.enabled},
             {"background_size", cfg.explain.background_size},
             {"max_instances", cfg.explain.max_instances},
             {"permutations", cfg.explain.permutations},
             {"exact_max_features", cfg.explain.exact_max_features}}},
           {"output", {{"dir", cfg.output_dir}, {"record_timing", cfg.record_timing}}}};
    if (cfg.sweep) {
        json axes = json::object();
        if (!cfg.sweep->clients.empty()) axes["clients"] = cfg.sweep->clients;
        if (!cfg.sweep->fraction_fit.empty()) axes["fraction_fit"] = cfg.sweep->fraction_fit;
        if (!cfg.sweep->local_epochs.empty()) axes["local_epochs"] = cfg.sweep->local_epochs;
        j["sweep"] = axes;
    }
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config file not found or unreadable: " + path.string()});
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({path.string() + ": not valid JSON: " + e.what()});
    }
    return config_from_json(j);
}

std::vector<std::string> validate(const ExperimentConfig& cfg) {
    std::vector<std::string> p;
    const auto& fl = cfg.federated;

    if (cfg.dataset.path.empty()) p.push_back("dataset.path: required");
    if (cfg.dataset.schema.empty()) p.push_back("dataset.schema: required");
    if (!(cfg.dataset.test_fraction > 0.0 && cfg.dataset.test_fraction < 1.0))
        p.push_back("dataset.test_fraction: must lie in (0, 1)");
    if (cfg.dataset.max_rows != 0 && cfg.dataset.max_rows < 10)
        p.push_back("dataset.max_rows: must be 0 (all rows) or at least 10");

    if (cfg.hidden_units.empty()) p.push_back("architecture.hidden_units: at least one hidden layer required");
    for (auto u : cfg.hidden_units) {
        if (u == 0) {
            p.push_back("architecture.hidden_units: every layer needs at least one unit");
            break;
        }
    }

    if (fl.n_clients == 0) p.push_back("federated.n_clients: must be >= 1");
    if (!(fl.fraction_fit > 0.0 && fl.fraction_fit <= 1.0)) p.push_back("federated.fraction_fit: must lie in (0, 1]");
    if (fl.local_epochs == 0) p.push_back("federated.local_epochs: must be >= 1");
    if (fl.max_rounds == 0) p.push_back("federated.max_rounds: must be >= 1");
    if (fl.convergence.mode == fedsim::StopMode::early_stopping && fl.convergence.patience == 0)
        p.push_back("federated.convergence.patience: must be >= 1 with early_stopping");
    if (!(fl.convergence.min_delta >= 0.0) || !std::isfinite(fl.convergence.min_delta))
        p.push_back("federated.convergence.min_delta: must be a finite value >= 0");
    auto check_target = [&](const std::optional<double>& v, const char* name) {
        if (v && !(*v >= 0.0 && *v <= 1.0)) p.push_back(std::string("federated.target.") + name + ": must lie in [0, 1]");
    };
    check_target(fl.target.accuracy, "accuracy");
    check_target(fl.target.f1, "f1");
    check_target(fl.target.auc, "auc");

    if (fl.batch_size == 0) p.push_back("training.batch_size: must be >= 1");
    if (!(fl.threshold > 0.0 && fl.threshold < 1.0)) p.push_back("training.threshold: must lie in (0, 1)");
    if (!(fl.optimizer.learning_rate > 0.0) || !std::isfinite(fl.optimizer.learning_rate))
        p.push_back("training.optimizer.learning_rate: must be > 0");
    if (!(fl.optimizer.beta1 >= 0.0 && fl.optimizer.beta1 < 1.0))
        p.push_back("training.optimizer.beta1: must lie in [0, 1)");
    if (!(fl.optimizer.beta2 >= 0.0 && fl.optimizer.beta2 < 1.0))
        p.push_back("training.optimizer.beta2: must lie in [0, 1)");
    if (!(fl.optimizer.epsilon > 0.0) || !std::isfinite(fl.optimizer.epsilon))
        p.push_back("training.optimizer.epsilon: must be > 0");

    if (cfg.centralized_epochs == 0) p.push_back("centralized.epochs: must be >= 1");

    if (cfg.mode == ExperimentMode::sweep) {
        if (!cfg.sweep) {
            p.push_back("sweep: required in sweep mode");
        } else {
            const auto& s = *cfg.sweep;
            if (s.clients.empty() && s.fraction_fit.empty() && s.local_epochs.empty())
                p.push_back("sweep: at least one axis (clients, fraction_fit, local_epochs) required");
            for (auto m : s.clients) {
                if (m == 0) {
                    p.push_back("sweep.clients: every value must be >= 1");
                    break;
                }
            }
            for (auto fr : s.fraction_fit) {
                if (!(fr > 0.0 && fr <= 1.0)) {
                    p.push_back("sweep.fraction_fit: every value must lie in (0, 1]");
                    break;
                }
            }
            for (auto e : s.local_epochs) {
                if (e == 0) {
                    p.push_back("sweep.local_epochs: every value must be >= 1");
                    break;
                }
            }
            if (has_duplicates(s.clients)) p.push_back("sweep.clients: duplicate values");
            if (has_duplicates(s.fraction_fit)) p.push_back("sweep.fraction_fit: duplicate values");
            if (has_duplicates(s.local_epochs)) p.push_back("sweep.local_epochs: duplicate values");
        }
    } else if (cfg.sweep) {
        p.push_back("sweep: axes are only valid in sweep mode (mode is " + to_string(cfg.mode) + ")");
    }

    if (cfg.explain.background_size == 0) p.push_back("explain.background_size: must be >= 1");
    if (cfg.explain.max_instances == 0) p.push_back("explain.max_instances: must be >= 1");
    if (cfg.explain.permutations == 0) p.push_back("explain.permutations: must be >= 1");
    if (cfg.explain.exact_max_features > xai::kMaxExactFeatures)
        p.push_back("explain.exact_max_features: must be <= " + std::to_string(xai::kMaxExactFeatures));

    if (cfg.output_dir.empty()) p.push_back("output.dir: required");
    return p;
}

std::string run_id(const ExperimentConfig& cfg) { return to_hex(fnv1a64(config_to_json(cfg).dump())); }

std::filesystem::path run_directory(const ExperimentConfig& cfg, const std::filesystem::path& base_dir) {
    return resolve(base_dir, cfg.output_dir) / ("run-" + run_id(cfg));
}

PreparedData prepare_data(const ExperimentConfig& cfg, const std::filesystem::path& base_dir) {
    PreparedData data;
    data.schema = dataio::load_schema(resolve(base_dir, cfg.dataset.schema));
    auto raw = dataio::load_dataset(resolve(base_dir, cfg.dataset.path), data.schema);
    if (raw.n_rows() < 4) throw dataio::DataError("dataset needs at least 4 rows", raw.source);

    const std::uint64_t seed = data_seed(cfg);
    const auto& label = data.schema.label_column().name;
    auto labels = dataio::map_labels(raw, label, data.schema.label_positive_values);

    if (cfg.dataset.max_rows > 0 && cfg.dataset.max_rows < raw.n_rows()) {
        double drop = 1.0 - static_cast<double>(cfg.dataset.max_rows) / static_cast<double>(raw.n_rows());
        auto keep = dataio::stratified_split_indices(labels, drop, derive_seed(seed, "subsample")).train;
        raw = raw.select_rows(keep);
        labels = select_labels(labels, keep);
    }

    auto split = dataio::stratified_split_indices(labels, cfg.dataset.test_fraction, derive_seed(seed, "split"));
    data.train = dataio::preprocess_fit(raw.select_rows(split.train), data.schema);
    data.test = dataio::preprocess_apply(raw.select_rows(split.test), data.train.transform);
    return data;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& base_dir,
                                const RunOptions& options) {
    auto problems = validate(cfg);
    if (!problems.empty()) throw ConfigError(std::move(problems));
    if (cfg.mode == ExperimentMode::sweep) throw ConfigError({"mode: run_experiment needs federated or centralized"});
    auto data = prepare_data(cfg, base_dir);
    return run_prepared(cfg, data, base_dir, options);
}

ExperimentResult run_experiment(const std::filesystem::path& config_path, const RunOptions& options) {
    return run_experiment(load_config(config_path), config_path.parent_path(), options);
}

std::uint64_t sweep_row_seed(std::uint64_t base_seed, std::size_t clients, double fraction_fit,
                             std::size_t local_epochs) {
    std::string key = "clients=" + std::to_string(clients) + ";fraction=" + format_double(fraction_fit) +
                      ";epochs=" + std::to_string(local_epochs);
    return base_seed + fnv1a64(key);
}

SweepTable run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& base_dir, const RunOptions& options) {
    auto problems = validate(cfg);
    if (cfg.mode != ExperimentMode::sweep) problems.push_back("mode: run_sweep needs mode 'sweep'");
    if (!problems.empty()) throw ConfigError(std::move(problems));

    const auto& axes = *cfg.sweep;
    auto or_base = [](auto values, auto base) {
        if (values.empty()) values.push_back(base);
        return values;
    };
    auto clients = or_base(axes.clients, cfg.federated.n_clients);
    auto fractions = or_base(axes.fraction_fit, cfg.federated.fraction_fit);
    auto epochs = or_base(axes.local_epochs, cfg.federated.local_epochs);

    SweepTable table;
    const auto sweep_name = "sweep-" + run_id(cfg);
    table.sweep_dir = resolve(base_dir, cfg.output_dir) / sweep_name;
    std::filesystem::create_directories(table.sweep_dir);

    std::vector<ExperimentConfig> row_cfgs;
    for (auto m : clients) {
        for (auto fr : fractions) {
            for (auto e : epochs) {
                ExperimentConfig row = cfg;
                row.mode = ExperimentMode::federated;
                row.sweep.reset();
                row.explain.enabled = false;
                row.dataset.split_seed = data_seed(cfg);
                row.seed = sweep_row_seed(cfg.seed, m, fr, e);
                row.federated.seed = row.seed;
                row.federated.n_clients = m;
                row.federated.fraction_fit = fr;
                row.federated.local_epochs = e;
                row.output_dir = (std::filesystem::path(cfg.output_dir) / sweep_name / "rows").string();
                row_cfgs.push_back(std::move(row));
            }
        }
    }

    auto data = prepare_data(cfg, base_dir);
    table.rows.resize(row_cfgs.size());
    parallel_for(row_cfgs.size(), [&](std::size_t i) {
        const auto& rc = row_cfgs[i];
        std::string tag = "[M=" + std::to_string(rc.federated.n_clients) +
                          " Fr=" + format_double(rc.federated.fraction_fit) +
                          " E=" + std::to_string(rc.federated.local_epochs) + "] ";
        auto result = run_prepared(rc, data, base_dir, options, tag);
        SweepRow& row = table.rows[i];
        row.clients = rc.federated.n_clients;
        row.fraction_fit = rc.federated.fraction_fit;
        row.local_epochs = rc.federated.local_epochs;
        row.seed = rc.seed;
        row.final_metrics = result.report.final_metrics();
        row.rounds_to_convergence = result.report.rounds_to_convergence;
        row.rounds_run = result.report.rounds.size();
        row.run_id = run_id(rc);
    });

    write_sweep_csvs(table);
    return table;
}

SweepTable run_sweep(const std::filesystem::path& config_path, const RunOptions& options) {
    return run_sweep(load_config(config_path), config_path.parent_path(), options);
}

xai::ShapMatrix explain_model(const nn::ModelParams& params, const PreparedData& data, const ExplainConfig& cfg,
                              std::uint64_t seed) {
    if (data.test.n_samples() == 0) throw Error("explain_model: empty test set");
    auto background = xai::sample_background(data.train.features, cfg.background_size, derive_seed(seed, "background"));
    auto ids = sample_indices(data.test.n_samples(), cfg.max_instances, derive_seed(seed, "instances"));
    auto instances = data.test.features.select_rows(ids);

    xai::ExplainOptions options;
    options.permutations = cfg.permutations;
    options.exact_max_features = cfg.exact_max_features;
    options.seed = derive_seed(seed, "shap");
    return xai::explain(xai::probability_model(params), instances, ids, background, data.train.feature_names, options);
}

void write_explanations(const std::filesystem::path& dir, const xai::ShapMatrix& shap) {
    std::filesystem::create_directories(dir);
    xai::write_beeswarm_csv(dir / "shap_beeswarm.csv", xai::beeswarm_export(shap));
    xai::write_bar_csv(dir / "shap_bar.csv", xai::global_importance(shap));

    std::ostringstream out;
    out << "instance_id,base_value,model_output,adjusted";
    for (const auto& name : shap.feature_names) out << "," << csv_escape(name);
    out << "\n";
    for (const auto& row : shap.rows) {
        out << row.instance_id << "," << format_double(row.base_value) << "," << format_double(row.model_output) << ","
            << (row.adjusted ? 1 : 0);
        for (double v : row.phi) out << "," << format_double(v);
        out << "\n";
    }
    write_text(dir / "shap_values.csv", out.str());
}

json report_to_json(const fedsim::RunReport& report, const ExperimentConfig& cfg, const PreparedData& data) {
    json rounds = json::array();
    for (const auto& r : report.rounds) {
        json row = metrics_to_json(r.metrics);
        row["round"] = r.round;
        row["selected_clients"] = r.selected_clients;
        rounds.push_back(row);
    }
    json j{{"run_id", run_id(cfg)},
           {"mode", fedsim::to_string(report.mode)},
           {"config", config_to_json(cfg)},
           {"dataset",
            {{"name", data.schema.dataset_name},
             {"n_train", data.train.n_samples()},
             {"n_test", data.test.n_samples()},
             {"n_features", data.train.n_features()},
             {"feature_names", data.train.feature_names}}},
           {"rounds", rounds},
           {"rounds_run", report.rounds.size()},
           {"rounds_to_convergence", report.rounds_to_convergence},
           {"stopped_early", report.stopped_early},
           {"final_metrics", report.rounds.empty() ? json(nullptr) : metrics_to_json(report.final_metrics())},
           {"checkpoint", "model.ckpt"}};
    j["rounds_to_target"] = report.rounds_to_target ? json(*report.rounds_to_target) : json(nullptr);
    return j;
}

void write_rounds_csv(const std::filesystem::path& path, const fedsim::RunReport& report) {
    std::ostringstream out;
    out << "round,n_selected,accuracy,precision,recall,f1,auc,loss,tp,tn,fp,fn,degenerate\n";
    for (const auto& r : report.rounds) {
        const auto& m = r.metrics;
        out << r.round << "," << r.selected_clients.size() << "," << format_double(m.accuracy) << ","
            << format_double(m.precision) << "," << format_double(m.recall) << "," << format_double(m.f1) << ","
            << format_double(m.auc) << "," << format_double(m.loss) << "," << m.confusion.tp << "," << m.confusion.tn
            << "," << m.confusion.fp << "," << m.confusion.fn << "," << (m.degenerate ? 1 : 0) << "\n";
    }
    write_text(path, out.str());
}

}  // namespace fedids::experiment
