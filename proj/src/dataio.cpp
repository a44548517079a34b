#include "fedids/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace fedids::dataio {
namespace {

std::string format_error(const std::string& message, const std::string& path, std::optional<std::size_t> row) {
    std::string prefix = path;
    if (row) prefix += (prefix.empty() ? "row " : ":row ") + std::to_string(*row);
    return prefix.empty() ? message : prefix + ": " + message;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Returns 1/0 for recognised boolean spellings, -1 otherwise.
int classify_boolean(const std::string& raw) {
    static const std::set<std::string> truthy{"1", "true", "t", "yes", "y"};
    static const std::set<std::string> falsy{"0", "false", "f", "no", "n"};
    auto l = lower(raw);
    if (truthy.count(l)) return 1;
    if (falsy.count(l)) return 0;
    return -1;
}

std::optional<double> parse_number(const std::string& raw) {
    const char* first = raw.data();
    const char* last = raw.data() + raw.size();
    if (first != last && *first == '+') ++first;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

const std::string& cell_text(const RawTable& table, std::size_t row, std::size_t col, const std::string& column) {
    const auto& cell = table.rows[row][col];
    if (!cell) {
        throw DataError("missing value in kept column '" + column + "'", table.source, table.row_number(row));
    }
    return *cell;
}

double encode_numeric(const RawTable& table, std::size_t row, std::size_t col, const std::string& column) {
    const auto& text = cell_text(table, row, col, column);
    auto v = parse_number(text);
    if (!v) throw DataError("column '" + column + "': '" + text + "' is not a finite number", table.source, table.row_number(row));
    return *v;
}

double encode_boolean(const RawTable& table, std::size_t row, std::size_t col, const std::string& column) {
    const auto& text = cell_text(table, row, col, column);
    int b = classify_boolean(text);
    if (b < 0) throw DataError("column '" + column + "': '" + text + "' is not a boolean", table.source, table.row_number(row));
    return b;
}

double scale(double x, const ScalerEntry& s) { return (x - s.mean) / s.stddev; }

// Writes the unscaled encoding of one column into out[, offset .. offset+width).
void encode_column(const RawTable& table, std::size_t col, const ColumnEncoder& enc, Matrix& out,
                   std::size_t offset) {
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        switch (enc.kind) {
            case ColumnKind::numeric:
                out(r, offset) = encode_numeric(table, r, col, enc.name);
                break;
            case ColumnKind::boolean:
                out(r, offset) = encode_boolean(table, r, col, enc.name);
                break;
            case ColumnKind::categorical_ordinal: {
                const auto& text = cell_text(table, r, col, enc.name);
                auto it = std::find(enc.categories.begin(), enc.categories.end(), text);
                out(r, offset) = static_cast<double>(it - enc.categories.begin());
                break;
            }
            case ColumnKind::categorical_onehot: {
                const auto& text = cell_text(table, r, col, enc.name);
                for (std::size_t k = 0; k < enc.categories.size(); ++k) {
                    out(r, offset + k) = enc.categories[k] == text ? 1.0 : 0.0;
                }
                break;
            }
        }
    }
}

// Fits an encoder for one feature column, or returns nullopt if the column must be pruned
// (any missing cell, or fewer than two distinct values).
std::optional<ColumnEncoder> fit_encoder(const RawTable& table, std::size_t col, const ColumnSpec& spec,
                                         std::size_t onehot_limit) {
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        if (!table.rows[r][col]) return std::nullopt;
    }
    ColumnEncoder enc;
    enc.name = spec.name;
    enc.kind = spec.kind;
    switch (spec.kind) {
        case ColumnKind::numeric: {
            std::set<double> distinct;
            for (std::size_t r = 0; r < table.n_rows() && distinct.size() < 2; ++r) {
                distinct.insert(encode_numeric(table, r, col, spec.name));
            }
            // Validate every cell, not just the first two distinct ones.
            for (std::size_t r = 0; r < table.n_rows(); ++r) encode_numeric(table, r, col, spec.name);
            if (distinct.size() < 2) return std::nullopt;
            break;
        }
        case ColumnKind::boolean: {
            std::set<int> distinct;
            for (std::size_t r = 0; r < table.n_rows(); ++r) {
                const auto& text = *table.rows[r][col];
                int b = static_cast<int>(encode_boolean(table, r, col, spec.name));
                distinct.insert(b);
                (b ? enc.true_values : enc.false_values).insert(text);
            }
            if (distinct.size() < 2) return std::nullopt;
            break;
        }
        case ColumnKind::categorical_ordinal:
        case ColumnKind::categorical_onehot: {
            std::set<std::string> seen;
            for (std::size_t r = 0; r < table.n_rows(); ++r) {
                const auto& text = *table.rows[r][col];
                if (seen.insert(text).second) enc.categories.push_back(text);
            }
            if (enc.categories.size() < 2) return std::nullopt;
            if (spec.kind == ColumnKind::categorical_onehot && enc.categories.size() > onehot_limit) {
                throw DataError("one-hot column '" + spec.name + "' has " + std::to_string(enc.categories.size()) +
                                    " categories, above the limit of " + std::to_string(onehot_limit),
                                table.source);
            }
            break;
        }
    }
    return enc;
}

PreparedDataset finish(const RawTable& table, const TransformState& transform, Matrix encoded) {
    PreparedDataset out;
    for (std::size_t r = 0; r < encoded.rows; ++r) {
        auto row = encoded.row(r);
        for (std::size_t c = 0; c < encoded.cols; ++c) row[c] = scale(row[c], transform.scaler[c]);
    }
    out.features = std::move(encoded);
    out.labels = map_labels(table, transform.label_column, transform.label_positive_values);
    out.feature_names = transform.feature_names();
    out.transform = transform;
    return out;
}

}  // namespace

DataError::DataError(const std::string& message, std::string path, std::optional<std::size_t> row)
    : Error(format_error(message, path, row)), path_(std::move(path)), row_(row) {}

std::string to_string(ColumnRole role) {
    switch (role) {
        case ColumnRole::feature: return "feature";
        case ColumnRole::label: return "label";
        case ColumnRole::drop: return "drop";
    }
    return "?";
}

std::string to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::boolean: return "boolean";
        case ColumnKind::categorical_ordinal: return "categorical_ordinal";
        case ColumnKind::categorical_onehot: return "categorical_onehot";
    }
    return "?";
}

ColumnRole parse_role(const std::string& text) {
    if (text == "feature") return ColumnRole::feature;
    if (text == "label") return ColumnRole::label;
    if (text == "drop") return ColumnRole::drop;
    throw DataError("unknown column role '" + text + "'");
}

ColumnKind parse_kind(const std::string& text) {
    if (text == "numeric") return ColumnKind::numeric;
    if (text == "boolean") return ColumnKind::boolean;
    if (text == "categorical_ordinal") return ColumnKind::categorical_ordinal;
    if (text == "categorical_onehot") return ColumnKind::categorical_onehot;
    throw DataError("unknown column kind '" + text + "'");
}

void SchemaConfig::validate() const {
    std::size_t labels = 0;
    std::set<std::string> names;
    for (const auto& c : columns) {
        if (c.name.empty()) throw DataError("schema '" + dataset_name + "': empty column name");
        if (!names.insert(c.name).second) {
            throw DataError("schema '" + dataset_name + "': duplicate column '" + c.name + "'");
        }
        if (c.role == ColumnRole::label) ++labels;
    }
    if (labels != 1) {
        throw DataError("schema '" + dataset_name + "': expected exactly one label column, found " +
                        std::to_string(labels));
    }
    if (onehot_cardinality_limit < 2) {
        throw DataError("schema '" + dataset_name + "': onehot_cardinality_limit must be >= 2");
    }
}

const ColumnSpec& SchemaConfig::label_column() const {
    for (const auto& c : columns) {
        if (c.role == ColumnRole::label) return c;
    }
    throw DataError("schema '" + dataset_name + "' has no label column");
}

SchemaConfig load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("schema file not found or unreadable", path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("schema is not valid JSON: ") + e.what(), path.string());
    }
    SchemaConfig schema;
    try {
        schema.dataset_name = j.value("dataset_name", path.stem().string());
        for (const auto& c : j.at("columns")) {
            ColumnSpec spec;
            spec.name = c.at("name").get<std::string>();
            spec.role = parse_role(c.value("role", std::string("feature")));
            spec.kind = parse_kind(c.value("kind", std::string("numeric")));
            schema.columns.push_back(std::move(spec));
        }
        for (const auto& v : j.at("label_positive_values")) schema.label_positive_values.insert(v.get<std::string>());
        schema.onehot_cardinality_limit = j.value("onehot_cardinality_limit", std::size_t{64});
        schema.header_row = j.value("header_row", true);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed schema: ") + e.what(), path.string());
    }
    schema.validate();
    return schema;
}

void save_schema(const std::filesystem::path& path, const SchemaConfig& schema) {
    nlohmann::json j;
    j["dataset_name"] = schema.dataset_name;
    j["columns"] = nlohmann::json::array();
    for (const auto& c : schema.columns) {
        j["columns"].push_back({{"name", c.name}, {"role", to_string(c.role)}, {"kind", to_string(c.kind)}});
    }
    j["label_positive_values"] = schema.label_positive_values;
    j["onehot_cardinality_limit"] = schema.onehot_cardinality_limit;
    j["header_row"] = schema.header_row;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write schema", path.string());
    out << j.dump(2) << "\n";
}

std::size_t RawTable::column_index(const std::string& name) const {
    auto it = std::find(headers.begin(), headers.end(), name);
    if (it == headers.end()) throw DataError("column '" + name + "' not present in table", source);
    return static_cast<std::size_t>(it - headers.begin());
}

RawTable RawTable::select_rows(std::span<const std::size_t> indices) const {
    RawTable out;
    out.headers = headers;
    out.source = source;
    out.rows.reserve(indices.size());
    out.row_numbers.reserve(indices.size());
    for (auto i : indices) {
        out.rows.push_back(rows.at(i));
        out.row_numbers.push_back(row_number(i));
    }
    return out;
}

std::size_t ColumnEncoder::width() const {
    return kind == ColumnKind::categorical_onehot ? categories.size() : 1;
}

std::vector<std::string> TransformState::feature_names() const {
    std::vector<std::string> names;
    for (const auto& enc : encoders) {
        if (enc.kind == ColumnKind::categorical_onehot) {
            for (const auto& cat : enc.categories) names.push_back(enc.name + "_" + cat);
        } else {
            names.push_back(enc.name);
        }
    }
    return names;
}

PreparedDataset PreparedDataset::select_rows(std::span<const std::size_t> indices) const {
    PreparedDataset out;
    out.features = features.select_rows(indices);
    out.labels = select_labels(labels, indices);
    out.feature_names = feature_names;
    out.transform = transform;
    return out;
}

Labels map_labels(const RawTable& table, const std::string& label_column,
                  const std::set<std::string>& positive_values) {
    const auto col = table.column_index(label_column);
    Labels labels(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        const auto& cell = table.rows[r][col];
        if (!cell) throw DataError("missing label in column '" + label_column + "'", table.source, table.row_number(r));
        labels[r] = positive_values.count(*cell) ? 1 : 0;
    }
    return labels;
}

Matrix encode_unscaled(const RawTable& table, const TransformState& transform) {
    std::size_t width = 0;
    for (const auto& enc : transform.encoders) width += enc.width();
    Matrix out(table.n_rows(), width);
    std::size_t offset = 0;
    for (const auto& enc : transform.encoders) {
        encode_column(table, table.column_index(enc.name), enc, out, offset);
        offset += enc.width();
    }
    return out;
}

PreparedDataset preprocess_fit(const RawTable& table, const SchemaConfig& schema) {
    schema.validate();
    for (const auto& c : schema.columns) table.column_index(c.name);

    TransformState transform;
    transform.label_column = schema.label_column().name;
    transform.label_positive_values = schema.label_positive_values;

    auto labels = map_labels(table, transform.label_column, transform.label_positive_values);
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    if (positives == 0 || positives == static_cast<long>(labels.size())) {
        throw DataError("label column '" + transform.label_column + "' has only one class", table.source);
    }

    for (const auto& spec : schema.columns) {
        if (spec.role != ColumnRole::feature) continue;
        auto enc = fit_encoder(table, table.column_index(spec.name), spec, schema.onehot_cardinality_limit);
        if (!enc) continue;
        transform.kept_columns.push_back(spec.name);
        transform.encoders.push_back(std::move(*enc));
    }
    if (transform.encoders.empty()) throw DataError("no feature columns survive pruning", table.source);

    Matrix encoded = encode_unscaled(table, transform);
    const auto n = static_cast<double>(encoded.rows);
    transform.scaler.resize(encoded.cols);
    for (std::size_t c = 0; c < encoded.cols; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < encoded.rows; ++r) sum += encoded(r, c);
        const double mean = sum / n;
        double sq = 0.0;
        for (std::size_t r = 0; r < encoded.rows; ++r) {
            const double d = encoded(r, c) - mean;
            sq += d * d;
        }
        const double stddev = std::sqrt(sq / n);
        if (!(stddev > 0.0)) {
            throw DataError("feature '" + transform.feature_names()[c] + "' has zero variance after encoding",
                            table.source);
        }
        transform.scaler[c] = {mean, stddev};
    }
    return finish(table, transform, std::move(encoded));
}

PreparedDataset preprocess_apply(const RawTable& table, const TransformState& transform) {
    for (const auto& name : transform.kept_columns) table.column_index(name);
    table.column_index(transform.label_column);
    return finish(table, transform, encode_unscaled(table, transform));
}

TrainTestIndices stratified_split_indices(const Labels& labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw DataError("test_fraction must lie in (0,1)");
    const std::size_t n = labels.size();
    if (n < 2) throw DataError("need at least 2 samples to split");

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
        by_class[labels[i]].push_back(i);
    }
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < 2) {
            throw DataError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                            " samples; at least 2 are needed to appear in both splits");
        }
    }

    const auto total = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    std::size_t quota[2];
    double ideal[2];
    for (int c = 0; c < 2; ++c) {
        const auto nc = by_class[c].size();
        ideal[c] = test_fraction * static_cast<double>(nc);
        quota[c] = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(ideal[c])), 1, nc - 1);
    }
    while (quota[0] + quota[1] > total) {
        int pick = -1;
        for (int c = 0; c < 2; ++c) {
            if (quota[c] <= 1) continue;
            if (pick < 0 || quota[c] - ideal[c] > quota[pick] - ideal[pick]) pick = c;
        }
        if (pick < 0) throw DataError("test split too small to hold both classes");
        --quota[pick];
    }
    while (quota[0] + quota[1] < total) {
        int pick = -1;
        for (int c = 0; c < 2; ++c) {
            if (quota[c] + 1 >= by_class[c].size()) continue;
            if (pick < 0 || ideal[c] - quota[c] > ideal[pick] - quota[pick]) pick = c;
        }
        if (pick < 0) throw DataError("train split too small to hold both classes");
        ++quota[pick];
    }

    TrainTestIndices out;
    for (int c = 0; c < 2; ++c) {
        auto idx = by_class[c];
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        std::shuffle(idx.begin(), idx.end(), rng);
        out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<long>(quota[c]));
        out.train.insert(out.train.end(), idx.begin() + static_cast<long>(quota[c]), idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

TrainTestSplit split_train_test(const PreparedDataset& data, double test_fraction, std::uint64_t seed) {
    auto idx = stratified_split_indices(data.labels, test_fraction, seed);
    return {data.select_rows(idx.train), data.select_rows(idx.test)};
}

std::vector<ClientPartition> partition_clients(const PreparedDataset& train, std::size_t n_clients,
                                               std::uint64_t seed) {
    const std::size_t n = train.n_samples();
    if (n_clients == 0) throw DataError("n_clients must be positive");
    if (n_clients > n) {
        throw DataError("n_clients (" + std::to_string(n_clients) + ") exceeds training sample count (" +
                        std::to_string(n) + ")");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<ClientPartition> parts(n_clients);
    const std::size_t base = n / n_clients;
    const std::size_t extra = n % n_clients;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < n_clients; ++k) {
        const std::size_t size = base + (k < extra ? 1 : 0);
        auto& part = parts[k];
        part.client_id = k;
        part.source_rows.assign(perm.begin() + static_cast<long>(begin), perm.begin() + static_cast<long>(begin + size));
        std::sort(part.source_rows.begin(), part.source_rows.end());
        part.features = train.features.select_rows(part.source_rows);
        part.labels = select_labels(train.labels, part.source_rows);
        begin += size;
    }
    return parts;
}

}  // namespace fedids::dataio
