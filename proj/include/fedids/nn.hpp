#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fedids/common.hpp"

namespace fedids::nn {

// Dense network shape: input -> hidden ReLU layers -> single sigmoid output.
struct Architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_units;

    void validate() const;
    std::size_t layer_count() const { return hidden_units.size() + 1; }
    std::size_t fan_in(std::size_t layer) const;
    std::size_t fan_out(std::size_t layer) const;

    bool operator==(const Architecture&) const = default;
};

struct LayerParams {
    Matrix weights;             // fan_in x fan_out
    std::vector<double> bias;   // fan_out

    bool operator==(const LayerParams&) const = default;
};

struct ModelParams {
    std::vector<LayerParams> layers;

    Architecture architecture() const;
    std::size_t parameter_count() const;
    bool operator==(const ModelParams&) const = default;
};

// Partial derivatives of the mean batch loss, shaped like ModelParams.
struct Gradients {
    std::vector<LayerParams> layers;

    bool operator==(const Gradients&) const = default;
};

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
    bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;  // completed updates
    std::vector<LayerParams> first_moment;
    std::vector<LayerParams> second_moment;
};

// Zero moments shaped like `params`.
AdamState make_adam_state(const ModelParams& params, const AdamConfig& config = {});

// Probability clamp used inside the loss.
inline constexpr double kLossClamp = 1e-7;

ModelParams init_model(const Architecture& arch, std::uint64_t seed);

// Per-row probability of class 1.
std::vector<double> forward(const ModelParams& params, const Matrix& batch);

double bce_loss(std::span<const double> probs, std::span<const int> labels);

Gradients backward(const ModelParams& params, const Matrix& batch, std::span<const int> labels);

std::pair<AdamState, ModelParams> adam_step(AdamState state, ModelParams params, const Gradients& grads);

// In-place form of adam_step used by the training loop.
void adam_update(AdamState& state, ModelParams& params, const Gradients& grads);

// Label 1 iff probability >= threshold.
Labels predict(const ModelParams& params, const Matrix& batch, double threshold = 0.5);
Labels threshold_probs(std::span<const double> probs, double threshold = 0.5);

// Called after every epoch; return false to stop training early.
using EpochCallback = std::function<bool(std::size_t epoch, const ModelParams& params, double epoch_loss)>;

struct TrainResult {
    ModelParams params;
    AdamState optimizer;
    double final_loss = 0.0;  // mean mini-batch loss over the last epoch
    std::size_t epochs_run = 0;
};

TrainResult train_epochs(ModelParams params, const Matrix& features, const Labels& labels, std::size_t epochs,
                         std::size_t batch_size, AdamState optimizer, std::uint64_t seed,
                         const EpochCallback& on_epoch = {});

// Flat views of every coordinate in layer order: weights row-major, then bias.
std::vector<double> flatten(const ModelParams& params);
ModelParams unflatten(const Architecture& arch, std::span<const double> values);

// Binary checkpoint; layout documented in docs/checkpoint_format.md.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedids::nn
