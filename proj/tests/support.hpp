#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "fedids/common.hpp"
#include "fedids/dataio.hpp"
#include "fedids/nn.hpp"

namespace test_support {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("fedids-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline fedids::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    fedids::Matrix m(rows, cols);
    for (auto& v : m.values) v = normal(rng);
    return m;
}

inline fedids::Labels random_labels(std::size_t n, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    fedids::Labels y(n);
    for (auto& v : y) v = coin(rng) ? 1 : 0;
    y[0] = 0;
    if (n > 1) y[1] = 1;
    return y;
}

// Schema with every column a feature of the given kind, plus a trailing "label" column.
inline fedids::dataio::SchemaConfig simple_schema(const std::vector<std::pair<std::string, fedids::dataio::ColumnKind>>& cols,
                                                  std::set<std::string> positives = {"Attack"}) {
    fedids::dataio::SchemaConfig s;
    s.dataset_name = "test";
    for (const auto& [name, kind] : cols) s.columns.push_back({name, fedids::dataio::ColumnRole::feature, kind});
    s.columns.push_back({"label", fedids::dataio::ColumnRole::label, fedids::dataio::ColumnKind::categorical_ordinal});
    s.label_positive_values = std::move(positives);
    return s;
}

}  // namespace test_support
