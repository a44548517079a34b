#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fedids/nn.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fedids;
using namespace fedids::nn;

namespace {

ModelParams zero_net(std::size_t input_dim, std::vector<std::size_t> hidden) {
    auto p = init_model({input_dim, std::move(hidden)}, 1);
    for (auto& l : p.layers) {
        std::fill(l.weights.values.begin(), l.weights.values.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return p;
}

}  // namespace

TEST_CASE("architecture validation and shapes") {
    CHECK_THROWS_AS(Architecture({3, {}}).validate(), Error);
    CHECK_THROWS_AS(Architecture({0, {4}}).validate(), Error);
    CHECK_THROWS_AS(Architecture({3, {4, 0}}).validate(), Error);
    auto p = init_model({5, {4, 3}}, 2);
    REQUIRE(p.layers.size() == 3);
    CHECK(p.layers[0].weights.rows == 5);
    CHECK(p.layers[0].weights.cols == 4);
    CHECK(p.layers[1].weights.rows == 4);
    CHECK(p.layers[2].weights.cols == 1);
    CHECK(p.architecture() == Architecture{5, {4, 3}});
    CHECK(p.parameter_count() == 5 * 4 + 4 + 4 * 3 + 3 + 3 + 1);
}

TEST_CASE("init is deterministic with zero biases") {
    auto a = init_model({6, {5, 4}}, 42);
    auto b = init_model({6, {5, 4}}, 42);
    auto c = init_model({6, {5, 4}}, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (const auto& l : a.layers) {
        for (double v : l.bias) CHECK(v == 0.0);
    }
}

TEST_CASE("He statistics: fan_in 200 gives stddev near 0.1") {
    auto p = init_model({200, {50}}, 7);
    const auto& w = p.layers[0].weights.values;
    REQUIRE(w.size() == 10000);
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double sq = 0.0;
    for (double v : w) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(w.size()));
    CHECK(std::abs(sd - 0.1) < 0.005);
    CHECK(std::abs(sd * sd - 2.0 / 200.0) < 0.1 * 2.0 / 200.0);
}

TEST_CASE("forward: zero net outputs one half everywhere") {
    auto p = zero_net(3, {4});
    std::mt19937_64 rng(1);
    auto out = forward(p, test_support::random_matrix(5, 3, rng));
    REQUIRE(out.size() == 5);
    for (double v : out) CHECK(v == 0.5);
}

TEST_CASE("forward: output bias 10 gives sigma(10)") {
    auto p = zero_net(2, {2});
    p.layers[1].bias[0] = 10.0;
    auto out = forward(p, Matrix::from_rows({{1.0, -2.0}}));
    CHECK(out[0] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-15));
    CHECK(std::abs(out[0] - 0.9999546) < 1e-7);
}

TEST_CASE("forward: negative pre-activation is cut by ReLU") {
    // Hidden unit with pre-activation -3 contributes nothing; output = sigma(0).
    auto p = zero_net(1, {1});
    p.layers[0].weights(0, 0) = -3.0;
    p.layers[1].weights(0, 0) = 5.0;
    CHECK(forward(p, Matrix::from_rows({{1.0}}))[0] == 0.5);
    // Positive pre-activation passes through: sigma(5 * 3).
    CHECK(forward(p, Matrix::from_rows({{-1.0}}))[0] == doctest::Approx(1.0 / (1.0 + std::exp(-15.0))));
}

TEST_CASE("forward rejects a width mismatch") {
    auto p = zero_net(3, {2});
    CHECK_THROWS_AS(forward(p, Matrix(2, 4)), ShapeError);
}

TEST_CASE("property: probabilities stay strictly inside (0,1)") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        auto p = oracles::random_net(4, {6, 3}, static_cast<std::uint64_t>(t));
        auto x = test_support::random_matrix(7, 4, rng, 3.0);
        auto out = forward(p, x);
        CHECK(out.size() == 7);
        for (double v : out) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("bce loss values") {
    std::vector<double> p1{1.0};
    std::vector<int> y1{1};
    CHECK(bce_loss(p1, y1) < 1e-6);
    std::vector<double> half{0.5};
    CHECK(bce_loss(half, y1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    std::vector<double> quarter{0.25};
    CHECK(bce_loss(quarter, y1) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    std::vector<double> zero{0.0};
    CHECK(bce_loss(zero, y1) == doctest::Approx(-std::log(kLossClamp)));
    std::vector<int> y2{1, 0};
    CHECK_THROWS_AS(bce_loss(half, y2), ShapeError);
}

TEST_CASE("gradient matches finite differences on random small nets") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<std::size_t> depth(1, 3), width(1, 10), dim(1, 8);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::size_t> hidden(depth(rng));
        for (auto& h : hidden) h = width(rng);
        const std::size_t d = dim(rng);
        auto p = oracles::random_net(d, hidden, static_cast<std::uint64_t>(100 + t));
        auto x = test_support::random_matrix(6, d, rng);
        auto y = test_support::random_labels(6, rng);
        CHECK(oracles::gradient_check(p, x, y) < 1e-4);
    }
}

TEST_CASE("duplicated batch rows leave the gradient unchanged") {
    std::mt19937_64 rng(3);
    auto p = oracles::random_net(3, {4}, 9);
    auto x = test_support::random_matrix(4, 3, rng);
    Labels y{0, 1, 1, 0};
    Matrix x2(8, 3);
    Labels y2;
    for (std::size_t r = 0; r < 8; ++r) {
        for (std::size_t c = 0; c < 3; ++c) x2(r, c) = x(r % 4, c);
        y2.push_back(y[r % 4]);
    }
    auto g1 = flatten(ModelParams{backward(p, x, y).layers});
    auto g2 = flatten(ModelParams{backward(p, x2, y2).layers});
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("zero-output net with balanced labels has zero output bias gradient") {
    auto p = oracles::random_net(3, {4}, 2);
    std::fill(p.layers[1].weights.values.begin(), p.layers[1].weights.values.end(), 0.0);
    p.layers[1].bias[0] = 0.0;
    std::mt19937_64 rng(1);
    auto g = backward(p, test_support::random_matrix(4, 3, rng), Labels{0, 1, 0, 1});
    CHECK(g.layers[1].bias[0] == doctest::Approx(0.0));
}

TEST_CASE("adam first step on a scalar moves by alpha/(1+eps)") {
    ModelParams p{{LayerParams{Matrix(1, 1, 0.0), {0.0}}}};
    Gradients g{{LayerParams{Matrix(1, 1, 1.0), {0.0}}}};
    auto [state, next] = adam_step(make_adam_state(p), p, g);
    CHECK(state.step == 1);
    CHECK(next.layers[0].weights(0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(next.layers[0].bias[0] == 0.0);
}

TEST_CASE("adam with zero gradients and zero moments is a fixed point") {
    auto p = oracles::random_net(3, {2}, 4);
    Gradients g{p.layers};
    for (auto& l : g.layers) {
        std::fill(l.weights.values.begin(), l.weights.values.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    auto [state, next] = adam_step(make_adam_state(p), p, g);
    CHECK(next == p);
}

TEST_CASE("adam matches a scalar rollout over 100 steps") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto p = oracles::random_net(3, {4}, 5);
    AdamConfig cfg{0.01, 0.8, 0.99, 1e-7};
    auto state = make_adam_state(p, cfg);
    auto theta = flatten(p);
    std::vector<oracles::ScalarAdam> scalar(theta.size(), oracles::ScalarAdam{0.01, 0.8, 0.99, 1e-7});
    auto arch = p.architecture();
    for (int step = 0; step < 100; ++step) {
        std::vector<double> g(theta.size());
        for (auto& v : g) v = normal(rng);
        auto grads = Gradients{unflatten(arch, g).layers};
        std::tie(state, p) = adam_step(std::move(state), std::move(p), grads);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = scalar[i].step(theta[i], g[i]);
    }
    auto got = flatten(p);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - theta[i]) < 1e-12);
    CHECK(state.step == 100);
}

TEST_CASE("adam rejects non-finite gradients and bad hyperparameters") {
    auto p = oracles::random_net(2, {2}, 1);
    Gradients g{p.layers};
    g.layers[0].weights(0, 0) = std::nan("");
    CHECK_THROWS_AS(adam_step(make_adam_state(p), p, g), Error);
    CHECK_THROWS_AS(AdamConfig({0.0, 0.9, 0.999, 1e-8}).validate(), Error);
    CHECK_THROWS_AS(AdamConfig({0.001, 1.0, 0.999, 1e-8}).validate(), Error);
}

TEST_CASE("predict thresholds with ties going to the anomaly class") {
    std::vector<double> probs{0.4, 0.6, 0.5};
    CHECK(threshold_probs(probs, 0.5) == Labels{0, 1, 1});
    std::vector<double> p6{0.6};
    CHECK(threshold_probs(p6, 0.9) == Labels{0});
}

TEST_CASE("training lowers the loss and is deterministic") {
    std::mt19937_64 rng(17);
    auto x = test_support::random_matrix(64, 2, rng);
    Labels y(64);
    for (std::size_t r = 0; r < 64; ++r) y[r] = x(r, 0) + x(r, 1) > 0 ? 1 : 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto p = init_model({2, {8}}, seed);
        const double before = bce_loss(forward(p, x), y);
        // 100 epochs of 2 batches = 200 Adam steps.
        auto r1 = train_epochs(p, x, y, 100, 32, make_adam_state(p), seed);
        auto r2 = train_epochs(p, x, y, 100, 32, make_adam_state(p), seed);
        CHECK(bce_loss(forward(r1.params, x), y) < before);
        CHECK(r1.params == r2.params);
        CHECK(r1.optimizer.step == 200);
        CHECK(r1.epochs_run == 100);
    }
}

TEST_CASE("training rejects zero epochs and empty data") {
    auto p = init_model({2, {2}}, 1);
    Matrix x(4, 2);
    Labels y{0, 1, 0, 1};
    CHECK_THROWS_AS(train_epochs(p, x, y, 0, 2, make_adam_state(p), 1), Error);
    CHECK_THROWS_AS(train_epochs(p, Matrix(0, 2), Labels{}, 1, 2, make_adam_state(p), 1), Error);
}

TEST_CASE("epoch callback can stop training") {
    std::mt19937_64 rng(2);
    auto x = test_support::random_matrix(10, 2, rng);
    auto y = test_support::random_labels(10, rng);
    auto p = init_model({2, {3}}, 1);
    std::size_t calls = 0;
    auto r = train_epochs(p, x, y, 10, 4, make_adam_state(p), 1, [&](std::size_t, const ModelParams&, double) {
        return ++calls < 3;
    });
    CHECK(calls == 3);
    CHECK(r.epochs_run == 3);
}

TEST_CASE("flatten and unflatten are inverse") {
    auto p = oracles::random_net(4, {3, 2}, 8);
    auto flat = flatten(p);
    CHECK(flat.size() == p.parameter_count());
    CHECK(unflatten(p.architecture(), flat) == p);
    CHECK_THROWS_AS(unflatten(p.architecture(), std::span<const double>(flat.data(), flat.size() - 1)), ShapeError);
}

TEST_CASE("checkpoint round-trips bit-exactly and rejects corruption") {
    test_support::TempDir dir("ckpt");
    auto p = oracles::random_net(5, {4, 3}, 3);
    auto path = dir.path / "m.ckpt";
    save_checkpoint(path, p);
    CHECK(load_checkpoint(path) == p);

    auto bytes = test_support::read_file(path);
    test_support::write_file(dir.path / "short.ckpt", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(dir.path / "short.ckpt"), Error);
    test_support::write_file(dir.path / "long.ckpt", bytes + "x");
    CHECK_THROWS_AS(load_checkpoint(dir.path / "long.ckpt"), Error);
    auto bad = bytes;
    bad[0] = 'X';
    test_support::write_file(dir.path / "magic.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "magic.ckpt"), Error);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "absent.ckpt"), Error);
}
