#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedids {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/matrix dimensions that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Binary class labels, 0 = normal, 1 = anomaly.
using Labels = std::vector<int>;

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

    bool empty() const { return rows == 0 || cols == 0; }

    // Copies the given rows, in the given order, into a new matrix.
    Matrix select_rows(std::span<const std::size_t> indices) const;

    bool operator==(const Matrix&) const = default;
};

Labels select_labels(const Labels& labels, std::span<const std::size_t> indices);

// Mixes a base seed with a tag into an independent 64-bit stream seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

// 64-bit FNV-1a, stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view bytes);

std::string to_hex(std::uint64_t value);

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

// Shortest text that round-trips to the same double.
std::string format_double(double value);

// Runs fn(0..n-1) on up to max_workers threads (0 = hardware concurrency). The first
// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t max_workers = 0);

}  // namespace fedids
