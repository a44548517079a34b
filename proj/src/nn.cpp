#include "fedids/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace fedids::nn {
namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// out = input * layer.weights + layer.bias
void affine(const Matrix& input, const LayerParams& layer, Matrix& out) {
    const std::size_t fan_out = layer.weights.cols;
    out = Matrix(input.rows, fan_out);
    for (std::size_t i = 0; i < input.rows; ++i) {
        auto dst = out.row(i);
        std::copy(layer.bias.begin(), layer.bias.end(), dst.begin());
        auto src = input.row(i);
        for (std::size_t p = 0; p < src.size(); ++p) {
            const double a = src[p];
            if (a == 0.0) continue;
            auto w = layer.weights.row(p);
            for (std::size_t j = 0; j < fan_out; ++j) dst[j] += a * w[j];
        }
    }
}

// Pre-activations of every layer; hidden activations are max(0, z).
struct ForwardCache {
    std::vector<Matrix> activations;  // activations[l] is the input to layer l (l >= 1)
    std::vector<Matrix> pre;          // pre[l] is layer l's pre-activation
    std::vector<double> probs;
};

void check_input(const ModelParams& params, const Matrix& batch) {
    if (params.layers.empty()) throw ShapeError("model has no layers");
    if (batch.cols != params.layers.front().weights.rows) {
        throw ShapeError("batch width " + std::to_string(batch.cols) + " does not match model input_dim " +
                         std::to_string(params.layers.front().weights.rows));
    }
}

void run_forward(const ModelParams& params, const Matrix& batch, ForwardCache& cache) {
    check_input(params, batch);
    const std::size_t L = params.layers.size();
    cache.pre.resize(L);
    cache.activations.resize(L);
    const Matrix* input = &batch;
    for (std::size_t l = 0; l < L; ++l) {
        affine(*input, params.layers[l], cache.pre[l]);
        if (l + 1 < L) {
            Matrix& act = cache.activations[l + 1];
            act = cache.pre[l];
            for (auto& v : act.values) v = v > 0.0 ? v : 0.0;
            input = &act;
        }
    }
    const Matrix& logits = cache.pre[L - 1];
    cache.probs.resize(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) cache.probs[i] = sigmoid(logits(i, 0));
}

Gradients run_backward(const ModelParams& params, const Matrix& batch, std::span<const int> labels,
                       const ForwardCache& cache) {
    const std::size_t n = batch.rows;
    const std::size_t L = params.layers.size();
    Gradients grads;
    grads.layers.resize(L);

    // d(mean BCE)/d(logit) = (p - y) / n
    Matrix delta(n, 1);
    for (std::size_t i = 0; i < n; ++i) delta(i, 0) = (cache.probs[i] - labels[i]) / static_cast<double>(n);

    for (std::size_t l = L; l-- > 0;) {
        const Matrix& input = l == 0 ? batch : cache.activations[l];
        const auto& layer = params.layers[l];
        auto& g = grads.layers[l];
        const std::size_t fan_in = layer.weights.rows;
        const std::size_t fan_out = layer.weights.cols;
        g.weights = Matrix(fan_in, fan_out);
        g.bias.assign(fan_out, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto d = delta.row(i);
            auto a = input.row(i);
            for (std::size_t j = 0; j < fan_out; ++j) g.bias[j] += d[j];
            for (std::size_t p = 0; p < fan_in; ++p) {
                if (a[p] == 0.0) continue;
                auto gw = g.weights.row(p);
                for (std::size_t j = 0; j < fan_out; ++j) gw[j] += a[p] * d[j];
            }
        }
        if (l == 0) break;
        Matrix prev(n, fan_in);
        const Matrix& pre = cache.pre[l - 1];
        for (std::size_t i = 0; i < n; ++i) {
            auto d = delta.row(i);
            auto out = prev.row(i);
            for (std::size_t p = 0; p < fan_in; ++p) {
                if (!(pre(i, p) > 0.0)) continue;  // ReLU derivative, 0 at z = 0
                auto w = layer.weights.row(p);
                double s = 0.0;
                for (std::size_t j = 0; j < fan_out; ++j) s += d[j] * w[j];
                out[p] = s;
            }
        }
        delta = std::move(prev);
    }
    return grads;
}

template <class Fn>
void for_each_span(std::vector<LayerParams>& layers, Fn&& fn) {
    for (auto& layer : layers) {
        fn(std::span<double>(layer.weights.values));
        fn(std::span<double>(layer.bias));
    }
}

void check_same_shape(const std::vector<LayerParams>& a, const std::vector<LayerParams>& b, const char* what) {
    bool ok = a.size() == b.size();
    for (std::size_t l = 0; ok && l < a.size(); ++l) {
        ok = a[l].weights.rows == b[l].weights.rows && a[l].weights.cols == b[l].weights.cols &&
             a[l].bias.size() == b[l].bias.size();
    }
    if (!ok) throw ShapeError(std::string(what) + ": parameter shapes differ");
}

void check_labels(std::span<const int> labels, std::size_t rows) {
    if (labels.size() != rows) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch rows " +
                         std::to_string(rows));
    }
}

}  // namespace

void Architecture::validate() const {
    if (input_dim == 0) throw ShapeError("architecture: input_dim must be positive");
    if (hidden_units.empty()) throw ShapeError("architecture: at least one hidden layer is required");
    for (auto u : hidden_units) {
        if (u == 0) throw ShapeError("architecture: hidden layer widths must be positive");
    }
}

std::size_t Architecture::fan_in(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden_units.at(layer - 1);
}

std::size_t Architecture::fan_out(std::size_t layer) const {
    return layer < hidden_units.size() ? hidden_units[layer] : 1;
}

Architecture ModelParams::architecture() const {
    Architecture arch;
    if (layers.empty()) return arch;
    arch.input_dim = layers.front().weights.rows;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) arch.hidden_units.push_back(layers[l].weights.cols);
    return arch;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.values.size() + l.bias.size();
    return n;
}

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error("adam: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error("adam: beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error("adam: beta2 must lie in [0,1)");
    if (!(epsilon > 0.0)) throw Error("adam: epsilon must be > 0");
}

AdamState make_adam_state(const ModelParams& params, const AdamConfig& config) {
    config.validate();
    AdamState state;
    state.config = config;
    for (const auto& layer : params.layers) {
        LayerParams zero{Matrix(layer.weights.rows, layer.weights.cols), std::vector<double>(layer.bias.size(), 0.0)};
        state.first_moment.push_back(zero);
        state.second_moment.push_back(std::move(zero));
    }
    return state;
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    ModelParams params;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const std::size_t fan_in = arch.fan_in(l);
        const std::size_t fan_out = arch.fan_out(l);
        std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        LayerParams layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
        for (auto& w : layer.weights.values) w = he(rng);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

std::vector<double> forward(const ModelParams& params, const Matrix& batch) {
    ForwardCache cache;
    run_forward(params, batch, cache);
    return std::move(cache.probs);
}

double bce_loss(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size()) throw ShapeError("bce_loss: probs and labels differ in length");
    if (probs.empty()) throw ShapeError("bce_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kLossClamp, 1.0 - kLossClamp);
        total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

Gradients backward(const ModelParams& params, const Matrix& batch, std::span<const int> labels) {
    check_labels(labels, batch.rows);
    if (batch.rows == 0) throw ShapeError("backward: empty batch");
    ForwardCache cache;
    run_forward(params, batch, cache);
    return run_backward(params, batch, labels, cache);
}

void adam_update(AdamState& state, ModelParams& params, const Gradients& grads) {
    check_same_shape(params.layers, grads.layers, "adam_step");
    check_same_shape(params.layers, state.first_moment, "adam_step");
    check_same_shape(params.layers, state.second_moment, "adam_step");
    for (const auto& layer : grads.layers) {
        auto finite = [](double g) { return std::isfinite(g); };
        if (!std::all_of(layer.weights.values.begin(), layer.weights.values.end(), finite) ||
            !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
            throw Error("adam_step: non-finite gradient");
        }
    }

    const auto& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);

    auto update = [&](std::span<double> theta, std::span<const double> g, std::span<double> m,
                      std::span<double> v) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * (g[i] * g[i]);
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            theta[i] = theta[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weights.values, grads.layers[l].weights.values,
               state.first_moment[l].weights.values, state.second_moment[l].weights.values);
        update(params.layers[l].bias, grads.layers[l].bias, state.first_moment[l].bias,
               state.second_moment[l].bias);
    }
}

std::pair<AdamState, ModelParams> adam_step(AdamState state, ModelParams params, const Gradients& grads) {
    adam_update(state, params, grads);
    return {std::move(state), std::move(params)};
}

Labels threshold_probs(std::span<const double> probs, double threshold) {
    Labels out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1 : 0;
    return out;
}

Labels predict(const ModelParams& params, const Matrix& batch, double threshold) {
    return threshold_probs(forward(params, batch), threshold);
}

TrainResult train_epochs(ModelParams params, const Matrix& features, const Labels& labels, std::size_t epochs,
                         std::size_t batch_size, AdamState optimizer, std::uint64_t seed,
                         const EpochCallback& on_epoch) {
    if (epochs == 0) throw Error("train_epochs: epochs must be >= 1");
    if (batch_size == 0) throw Error("train_epochs: batch_size must be >= 1");
    if (features.rows == 0) throw Error("train_epochs: empty training data");
    check_labels(labels, features.rows);
    check_input(params, features);

    const std::size_t n = features.rows;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);

    TrainResult result;
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t count = std::min(batch_size, n - start);
            std::span<const std::size_t> idx(order.data() + start, count);
            Matrix batch = features.select_rows(idx);
            Labels batch_labels = select_labels(labels, idx);
            run_forward(params, batch, cache);
            loss_sum += bce_loss(cache.probs, batch_labels) * static_cast<double>(count);
            auto grads = run_backward(params, batch, batch_labels, cache);
            adam_update(optimizer, params, grads);
        }
        result.final_loss = loss_sum / static_cast<double>(n);
        result.epochs_run = epoch + 1;
        if (on_epoch && !on_epoch(epoch, params, result.final_loss)) break;
    }
    result.params = std::move(params);
    result.optimizer = std::move(optimizer);
    return result;
}

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    out.reserve(params.parameter_count());
    for (const auto& layer : params.layers) {
        out.insert(out.end(), layer.weights.values.begin(), layer.weights.values.end());
        out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

ModelParams unflatten(const Architecture& arch, std::span<const double> values) {
    arch.validate();
    ModelParams params;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        LayerParams layer{Matrix(arch.fan_in(l), arch.fan_out(l)), std::vector<double>(arch.fan_out(l))};
        params.layers.push_back(std::move(layer));
    }
    for_each_span(params.layers, [&](std::span<double> dst) {
        if (offset + dst.size() > values.size()) throw ShapeError("unflatten: too few values");
        std::copy_n(values.begin() + static_cast<long>(offset), dst.size(), dst.begin());
        offset += dst.size();
    });
    if (offset != values.size()) throw ShapeError("unflatten: too many values");
    return params;
}

}  // namespace fedids::nn
