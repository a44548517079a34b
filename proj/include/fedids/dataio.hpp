#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedids/common.hpp"

namespace fedids::dataio {

// Malformed input data. Carries the offending file and 1-based data row when known
// (data row 1 is the first row after the header).
class DataError : public Error {
public:
    DataError(const std::string& message, std::string path = {}, std::optional<std::size_t> row = std::nullopt);

    const std::string& path() const { return path_; }
    std::optional<std::size_t> row() const { return row_; }

private:
    std::string path_;
    std::optional<std::size_t> row_;
};

enum class ColumnRole { feature, label, drop };
enum class ColumnKind { numeric, boolean, categorical_ordinal, categorical_onehot };

struct ColumnSpec {
    std::string name;
    ColumnRole role = ColumnRole::feature;
    ColumnKind kind = ColumnKind::numeric;

    bool operator==(const ColumnSpec&) const = default;
};

struct SchemaConfig {
    std::string dataset_name;
    std::vector<ColumnSpec> columns;
    std::set<std::string> label_positive_values;
    std::size_t onehot_cardinality_limit = 64;
    // When false the file has no header line and columns follow schema order.
    bool header_row = true;

    // Throws DataError when an invariant does not hold.
    void validate() const;
    const ColumnSpec& label_column() const;

    bool operator==(const SchemaConfig&) const = default;
};

SchemaConfig load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const SchemaConfig& schema);

std::string to_string(ColumnRole role);
std::string to_string(ColumnKind kind);
ColumnRole parse_role(const std::string& text);
ColumnKind parse_kind(const std::string& text);

// A cell is either text or missing.
using Cell = std::optional<std::string>;

struct RawTable {
    std::vector<std::string> headers;
    std::vector<std::vector<Cell>> rows;
    std::string source;  // file the table came from, for error context
    std::vector<std::size_t> row_numbers;  // 1-based data row in `source`; empty = identity

    std::size_t n_rows() const { return rows.size(); }
    std::size_t row_number(std::size_t r) const { return row_numbers.empty() ? r + 1 : row_numbers[r]; }
    std::size_t n_cols() const { return headers.size(); }

    // Position of a named column; throws DataError if absent.
    std::size_t column_index(const std::string& name) const;

    RawTable select_rows(std::span<const std::size_t> indices) const;
};

RawTable load_dataset(const std::filesystem::path& path, const SchemaConfig& schema);

// Parses CSV text already in memory. `source` is only used in error messages.
RawTable parse_csv(const std::string& text, const SchemaConfig& schema, const std::string& source = "<memory>");

// Encoder state of one kept feature column.
struct ColumnEncoder {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    // categorical_ordinal: value -> index in first-appearance order.
    // Values unseen at fit time map to index categories.size().
    // categorical_onehot: one indicator per category, first-appearance order.
    std::vector<std::string> categories;
    // boolean: raw spellings that encode to 1; every other accepted spelling encodes to 0.
    std::set<std::string> true_values;
    std::set<std::string> false_values;

    // Number of model inputs this column expands into.
    std::size_t width() const;

    bool operator==(const ColumnEncoder&) const = default;
};

struct ScalerEntry {
    double mean = 0.0;
    double stddev = 1.0;

    bool operator==(const ScalerEntry&) const = default;
};

struct TransformState {
    std::string label_column;
    std::set<std::string> label_positive_values;
    std::vector<std::string> kept_columns;
    std::vector<ColumnEncoder> encoders;  // parallel to kept_columns
    std::vector<ScalerEntry> scaler;      // one per output feature

    std::vector<std::string> feature_names() const;

    bool operator==(const TransformState&) const = default;
};

struct PreparedDataset {
    Matrix features;
    Labels labels;
    std::vector<std::string> feature_names;
    TransformState transform;

    std::size_t n_samples() const { return features.rows; }
    std::size_t n_features() const { return features.cols; }

    PreparedDataset select_rows(std::span<const std::size_t> indices) const;
};

// Maps the label column to {0,1} without touching features.
Labels map_labels(const RawTable& table, const std::string& label_column,
                  const std::set<std::string>& positive_values);

PreparedDataset preprocess_fit(const RawTable& table, const SchemaConfig& schema);
PreparedDataset preprocess_apply(const RawTable& table, const TransformState& transform);

// Encodes kept columns into model inputs without scaling.
Matrix encode_unscaled(const RawTable& table, const TransformState& transform);

struct TrainTestIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified random split of row indices; both lists are returned sorted.
TrainTestIndices stratified_split_indices(const Labels& labels, double test_fraction, std::uint64_t seed);

struct TrainTestSplit {
    PreparedDataset train;
    PreparedDataset test;
};

TrainTestSplit split_train_test(const PreparedDataset& data, double test_fraction, std::uint64_t seed);

struct ClientPartition {
    std::size_t client_id = 0;
    Matrix features;
    Labels labels;
    std::vector<std::size_t> source_rows;  // rows of the training set, ascending

    std::size_t sample_count() const { return labels.size(); }
};

std::vector<ClientPartition> partition_clients(const PreparedDataset& train, std::size_t n_clients,
                                               std::uint64_t seed);

}  // namespace fedids::dataio
