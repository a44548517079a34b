#pragma once

// Independent reference computations used by unit and acceptance tests. None of these
// call into the code they check beyond forward evaluation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "fedids/nn.hpp"
#include "fedids/xai.hpp"

namespace oracles {

// Max relative error between backward() and central finite differences of the mean BCE.
inline double gradient_check(const fedids::nn::ModelParams& params, const fedids::Matrix& x,
                             const fedids::Labels& y, double h = 1e-5) {
    using namespace fedids;
    const auto arch = params.architecture();
    auto flat = nn::flatten(params);
    auto analytic = nn::flatten(nn::ModelParams{nn::backward(params, x, y).layers});
    auto loss_at = [&](const std::vector<double>& theta) {
        auto p = nn::unflatten(arch, theta);
        return nn::bce_loss(nn::forward(p, x), y);
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        auto plus = flat;
        auto minus = flat;
        plus[i] += h;
        minus[i] -= h;
        const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

// One coordinate of Adam, written directly from the update equations.
struct ScalarAdam {
    double alpha = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0;
    int t = 0;

    double step(double theta, double g) {
        t += 1;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double m_hat = m / (1.0 - std::pow(beta1, t));
        const double v_hat = v / (1.0 - std::pow(beta2, t));
        return theta - alpha * m_hat / (std::sqrt(v_hat) + eps);
    }
};

// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
inline double auc_pairwise(std::span<const double> scores, std::span<const int> labels) {
    double credit = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    return credit / pairs;
}

// Trapezoid area under the empirical ROC traced by descending thresholds.
inline double auc_trapezoid(std::span<const double> scores, std::span<const int> labels) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double pos = 0.0, neg = 0.0;
    for (int l : labels) (l == 1 ? pos : neg) += 1.0;
    double tp = 0.0, fp = 0.0, prev_tpr = 0.0, prev_fpr = 0.0, area = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] == 1 ? tp : fp) += 1.0;
            ++i;
        }
        const double tpr = tp / pos, fpr = fp / neg;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

// Shapley values as the average marginal contribution over every ordering of the features.
inline std::vector<double> shapley_by_permutations(const fedids::xai::Model& model, std::span<const double> instance,
                                                   const fedids::xai::BackgroundSet& background) {
    const std::size_t d = instance.size();
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> phi(d, 0.0);
    double count = 0.0;
    auto value = [&](const std::vector<bool>& in) {
        fedids::Matrix rows = background.rows;
        for (std::size_t b = 0; b < rows.rows; ++b) {
            for (std::size_t f = 0; f < d; ++f) {
                if (in[f]) rows(b, f) = instance[f];
            }
        }
        auto out = model(rows);
        return std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    };
    do {
        std::vector<bool> in(d, false);
        double prev = value(in);
        for (std::size_t f : order) {
            in[f] = true;
            const double cur = value(in);
            phi[f] += cur - prev;
            prev = cur;
        }
        count += 1.0;
    } while (std::next_permutation(order.begin(), order.end()));
    for (auto& p : phi) p /= count;
    return phi;
}

// Random dense net with the given widths.
inline fedids::nn::ModelParams random_net(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                          std::uint64_t seed) {
    fedids::nn::Architecture arch{input_dim, hidden};
    auto params = fedids::nn::init_model(arch, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, 0.1);
    for (auto& layer : params.layers) {
        for (auto& b : layer.bias) b = noise(rng);
    }
    return params;
}

}  // namespace oracles
