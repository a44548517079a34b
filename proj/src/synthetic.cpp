#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "fedids/experiment.hpp"

namespace fedids::experiment {
namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

const char* const kProtocols[] = {"tcp", "udp", "icmp"};
const char* const kLevels[] = {"low", "mid", "high"};

}  // namespace

SyntheticFiles generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    if (spec.n_samples < 10) throw Error("generate_synthetic: n_samples must be >= 10");
    if (spec.n_features < 2) throw Error("generate_synthetic: n_features must be >= 2");
    if (spec.rule.informative_feature >= spec.n_features)
        throw Error("generate_synthetic: informative_feature out of range");
    if (!(spec.rule.noise >= 0.0 && spec.rule.noise < 0.5))
        throw Error("generate_synthetic: noise must lie in [0, 0.5)");
    if (spec.name.empty()) throw Error("generate_synthetic: empty name");

    const std::size_t d = spec.n_features;
    const std::size_t informative = spec.rule.informative_feature;

    dataio::SchemaConfig schema;
    schema.dataset_name = spec.name;
    schema.label_positive_values = {"Attack"};
    schema.columns.push_back({"record_id", dataio::ColumnRole::drop, dataio::ColumnKind::numeric});
    std::vector<dataio::ColumnKind> kinds(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (i == informative) {
            kinds[i] = dataio::ColumnKind::numeric;
        } else {
            switch (i % 4) {
                case 1: kinds[i] = dataio::ColumnKind::numeric; break;
                case 2: kinds[i] = dataio::ColumnKind::categorical_onehot; break;
                case 3: kinds[i] = dataio::ColumnKind::boolean; break;
                default: kinds[i] = dataio::ColumnKind::categorical_ordinal; break;
            }
        }
        schema.columns.push_back({"f" + std::to_string(i), dataio::ColumnRole::feature, kinds[i]});
    }
    schema.columns.push_back({"label", dataio::ColumnRole::label, dataio::ColumnKind::categorical_ordinal});

    std::mt19937_64 rng(derive_seed(spec.seed, "synthetic"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> three(0, 2);

    std::ostringstream csv;
    csv << "record_id";
    for (std::size_t i = 0; i < d; ++i) csv << ",f" << i;
    csv << ",label\n";
    for (std::size_t r = 0; r < spec.n_samples; ++r) {
        csv << r + 1;
        bool positive = false;
        for (std::size_t i = 0; i < d; ++i) {
            csv << ",";
            if (i == informative) {
                double x = normal(rng);
                positive = x > spec.rule.threshold;
                csv << fixed6(x);
                continue;
            }
            switch (kinds[i]) {
                case dataio::ColumnKind::numeric: csv << fixed6(normal(rng)); break;
                case dataio::ColumnKind::categorical_onehot: csv << kProtocols[three(rng)]; break;
                case dataio::ColumnKind::boolean: csv << (unit(rng) < 0.5 ? "true" : "false"); break;
                case dataio::ColumnKind::categorical_ordinal: csv << kLevels[three(rng)]; break;
            }
        }
        if (unit(rng) < spec.rule.noise) positive = !positive;
        csv << "," << (positive ? "Attack" : "Normal") << "\n";
    }

    std::filesystem::create_directories(out_dir);
    SyntheticFiles files{out_dir / (spec.name + ".csv"), out_dir / (spec.name + ".schema.json")};
    std::ofstream out(files.csv, std::ios::binary);
    if (!out) throw Error("cannot write " + files.csv.string());
    out << csv.str();
    out.close();
    dataio::save_schema(files.schema, schema);
    return files;
}

}  // namespace fedids::experiment
