#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fedids/experiment.hpp"

namespace fs = std::filesystem;
using namespace fedids;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3 };

struct Overrides {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string mode;
    bool quiet = false;
};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw experiment::ConfigError({"config file not found or unreadable: " + path.string()});
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw experiment::ConfigError({path.string() + ": not valid JSON: " + e.what()});
    }
}

// Flags patch the config document before validation, so every problem is reported together.
experiment::ExperimentConfig load_with_overrides(const Overrides& o) {
    json j = read_json(o.config);
    if (j.is_object()) {
        if (!o.out.empty()) j["output"]["dir"] = fs::absolute(o.out).lexically_normal().string();
        if (o.seed) j["seed"] = *o.seed;
        if (!o.mode.empty()) {
            j["mode"] = o.mode;
            if (o.mode != "sweep") j.erase("sweep");
        }
    }
    return experiment::config_from_json(j);
}

void print_metrics(const metrics::MetricsBundle& m) {
    std::printf("accuracy=%.4f precision=%.4f recall=%.4f f1=%.4f auc=%.4f loss=%.4f tp=%llu tn=%llu fp=%llu fn=%llu\n",
                m.accuracy, m.precision, m.recall, m.f1, m.auc, m.loss,
                static_cast<unsigned long long>(m.confusion.tp), static_cast<unsigned long long>(m.confusion.tn),
                static_cast<unsigned long long>(m.confusion.fp), static_cast<unsigned long long>(m.confusion.fn));
}

int cmd_run(const Overrides& o) {
    auto cfg = load_with_overrides(o);
    if (cfg.mode == experiment::ExperimentMode::sweep) {
        throw experiment::ConfigError({"mode: 'run' needs federated or centralized; use the 'sweep' subcommand"});
    }
    auto result = experiment::run_experiment(cfg, fs::path(o.config).parent_path(), {!o.quiet});
    const auto& r = result.report;
    std::printf("run directory: %s\n", result.run_dir.string().c_str());
    std::printf("mode=%s rounds=%zu rounds_to_convergence=%zu\n", fedsim::to_string(r.mode).c_str(), r.rounds.size(),
                r.rounds_to_convergence);
    print_metrics(r.final_metrics());
    return kOk;
}

int cmd_sweep(const Overrides& o) {
    auto cfg = load_with_overrides(o);
    auto table = experiment::run_sweep(cfg, fs::path(o.config).parent_path(), {!o.quiet});
    std::printf("sweep directory: %s\n", table.sweep_dir.string().c_str());
    for (const auto& row : table.rows) {
        std::printf("M=%zu Fr=%s E=%zu rounds_to_convergence=%zu ", row.clients,
                    format_double(row.fraction_fit).c_str(), row.local_epochs, row.rounds_to_convergence);
        print_metrics(row.final_metrics);
    }
    return kOk;
}

int cmd_explain(const Overrides& o, const std::string& checkpoint) {
    auto cfg = load_with_overrides(o);
    if (cfg.mode == experiment::ExperimentMode::sweep) {
        throw experiment::ConfigError({"mode: 'explain' needs federated or centralized"});
    }
    fs::path ckpt = checkpoint.empty()
                        ? experiment::run_directory(cfg, fs::path(o.config).parent_path()) / "model.ckpt"
                        : fs::path(checkpoint);
    if (!fs::exists(ckpt)) throw Error("checkpoint not found: " + ckpt.string() + " (run the experiment first)");
    auto params = nn::load_checkpoint(ckpt);
    auto data = experiment::prepare_data(cfg, fs::path(o.config).parent_path());
    if (params.architecture().input_dim != data.train.n_features()) {
        throw Error("checkpoint input width does not match the prepared dataset");
    }
    auto shap = experiment::explain_model(params, data, cfg.explain, cfg.seed);
    auto dir = ckpt.parent_path();
    experiment::write_explanations(dir, shap);
    std::printf("explained %zu instances; outputs in %s\n", shap.rows.size(), dir.string().c_str());
    auto ranking = xai::global_importance(shap);
    for (std::size_t i = 0; i < ranking.size() && i < 10; ++i) {
        std::printf("%2zu. %s %.6f\n", i + 1, ranking[i].feature.c_str(), ranking[i].mean_abs_shap);
    }
    return kOk;
}

int cmd_synth(const experiment::SyntheticSpec& spec, const std::string& out) {
    auto files = experiment::generate_synthetic(spec, out);
    experiment::ExperimentConfig cfg;
    cfg.dataset.path = files.csv.filename().string();
    cfg.dataset.schema = files.schema.filename().string();
    cfg.hidden_units = {32, 16};
    cfg.federated.n_clients = 4;
    cfg.federated.local_epochs = 5;
    cfg.federated.max_rounds = 60;
    cfg.federated.convergence.patience = 10;
    cfg.seed = spec.seed;
    cfg.federated.seed = spec.seed;
    cfg.output_dir = "out";
    auto config_path = fs::path(out) / (spec.name + ".experiment.json");
    std::ofstream(config_path) << experiment::config_to_json(cfg).dump(2) << "\n";
    std::printf("wrote %s\nwrote %s\nwrote %s\n", files.csv.string().c_str(), files.schema.string().c_str(),
                config_path.string().c_str());
    return kOk;
}

void add_common(CLI::App* cmd, Overrides& o, bool with_mode) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory (overrides output.dir)");
    cmd->add_option("--seed", o.seed, "Base seed (overrides seed)");
    if (with_mode) {
        cmd->add_option("--mode", o.mode, "Run mode (overrides mode)")
            ->check(CLI::IsMember({"federated", "centralized"}));
    }
    cmd->add_flag("--quiet", o.quiet, "Suppress per-round progress");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated intrusion detection experiments"};
    app.require_subcommand(1);

    Overrides run_o, sweep_o, explain_o;
    auto* run = app.add_subcommand("run", "Run one federated or centralized experiment");
    add_common(run, run_o, true);

    auto* sweep = app.add_subcommand("sweep", "Run the cartesian product of the sweep axes");
    add_common(sweep, sweep_o, false);

    std::string checkpoint;
    auto* explain = app.add_subcommand("explain", "Write SHAP exports for a trained checkpoint");
    add_common(explain, explain_o, true);
    explain->add_option("--checkpoint", checkpoint, "Checkpoint to explain (default: the config's run directory)");

    experiment::SyntheticSpec spec;
    std::string synth_out = "data";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a planted rule");
    synth->add_option("--out", synth_out, "Directory for the generated files");
    synth->add_option("--samples", spec.n_samples, "Number of rows")->capture_default_str();
    synth->add_option("--features", spec.n_features, "Number of feature columns")->capture_default_str();
    synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
    synth->add_option("--informative", spec.rule.informative_feature, "Index of the label-driving feature")
        ->capture_default_str();
    synth->add_option("--threshold", spec.rule.threshold, "Label = feature > threshold")->capture_default_str();
    synth->add_option("--noise", spec.rule.noise, "Label flip probability")->capture_default_str();
    synth->add_option("--name", spec.name, "File name stem")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) return cmd_run(run_o);
        if (*sweep) return cmd_sweep(sweep_o);
        if (*explain) return cmd_explain(explain_o, checkpoint);
        if (*synth) return cmd_synth(spec, synth_out);
    } catch (const experiment::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const dataio::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
