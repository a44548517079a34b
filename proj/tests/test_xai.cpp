#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fedids/xai.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fedids;
using namespace fedids::xai;

namespace {

// f(x) = sum_i w_i x_i, evaluated row by row.
Model linear(std::vector<double> w) {
    return [w](const Matrix& m) {
        std::vector<double> out(m.rows, 0.0);
        for (std::size_t r = 0; r < m.rows; ++r) {
            for (std::size_t c = 0; c < m.cols; ++c) out[r] += w[c] * m(r, c);
        }
        return out;
    };
}

BackgroundSet random_background(std::size_t k, std::size_t d, std::mt19937_64& rng) {
    return {test_support::random_matrix(k, d, rng)};
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("coalition values at the extremes and for a linear readout") {
    auto f = linear({1.0, 2.0});
    BackgroundSet bg{Matrix::from_rows({{0.0, 0.0}})};
    std::vector<double> x{1.0, 1.0};
    CHECK(coalition_value(f, x, bg, {true, false}) == 1.0);
    CHECK(coalition_value(f, x, bg, {true, true}) == 3.0);
    CHECK(coalition_value(f, x, bg, {false, false}) == 0.0);

    std::mt19937_64 rng(2);
    auto net = oracles::random_net(3, {4}, 5);
    auto model = probability_model(net);
    auto bg2 = random_background(7, 3, rng);
    std::vector<double> inst{0.3, -1.0, 2.0};
    CHECK(coalition_value(model, inst, bg2, {true, true, true}) == nn::forward(net, Matrix::from_rows({{0.3, -1.0, 2.0}}))[0]);
    auto base = nn::forward(net, bg2.rows);
    CHECK(coalition_value(model, inst, bg2, {false, false, false}) ==
          doctest::Approx(sum(base) / 7.0).epsilon(1e-15));
}

TEST_CASE("exact shapley on a linear readout") {
    auto f = linear({1.0, 2.0});
    BackgroundSet bg{Matrix::from_rows({{0.0, 0.0}})};
    std::vector<double> x{1.0, 1.0};
    auto s = shap_exact(f, x, bg);
    CHECK(s.phi[0] == doctest::Approx(1.0));
    CHECK(s.phi[1] == doctest::Approx(2.0));
    CHECK(s.base_value == 0.0);
    CHECK(s.base_value + sum(s.phi) == doctest::Approx(3.0));
    CHECK_FALSE(s.adjusted);
}

TEST_CASE("symmetry: exchangeable features get equal values") {
    auto f = [](const Matrix& m) {
        std::vector<double> out(m.rows);
        for (std::size_t r = 0; r < m.rows; ++r) out[r] = std::tanh(m(r, 0) + m(r, 1)) + 0.3 * m(r, 2);
        return out;
    };
    BackgroundSet bg{Matrix::from_rows({{0.0, 0.0, 1.0}, {0.5, 0.5, -1.0}})};
    std::vector<double> x{1.0, 1.0, 2.0};
    auto s = shap_exact(f, x, bg);
    CHECK(std::abs(s.phi[0] - s.phi[1]) < 1e-9);
    auto plain = shap_exact(linear({1.0, 1.0}), std::vector<double>{1.0, 1.0}, BackgroundSet{Matrix(1, 2)});
    CHECK(plain.phi[0] == doctest::Approx(1.0));
    CHECK(plain.phi[1] == doctest::Approx(1.0));
}

TEST_CASE("dummy: a feature the network ignores gets exactly zero") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 10; ++t) {
        auto net = oracles::random_net(5, {6, 3}, static_cast<std::uint64_t>(t));
        const std::size_t dummy = static_cast<std::size_t>(t) % 5;
        for (std::size_t j = 0; j < net.layers[0].weights.cols; ++j) net.layers[0].weights(dummy, j) = 0.0;
        auto bg = random_background(6, 5, rng);
        auto x = test_support::random_matrix(1, 5, rng);
        auto s = shap_exact(probability_model(net), x.row(0), bg);
        CHECK(s.phi[dummy] == 0.0);
    }
}

TEST_CASE("linearity: shapley of a sum is the sum of shapley values") {
    std::mt19937_64 rng(9);
    auto a = probability_model(oracles::random_net(4, {5}, 1));
    auto b = probability_model(oracles::random_net(4, {3, 2}, 2));
    Model both = [&](const Matrix& m) {
        auto x = a(m);
        auto y = b(m);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
        return x;
    };
    auto bg = random_background(5, 4, rng);
    auto x = test_support::random_matrix(1, 4, rng);
    auto sa = shap_exact(a, x.row(0), bg);
    auto sb = shap_exact(b, x.row(0), bg);
    auto sab = shap_exact(both, x.row(0), bg);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(sab.phi[i] - sa.phi[i] - sb.phi[i]) < 1e-9);
}

TEST_CASE("efficiency holds in exact mode on random nets") {
    std::mt19937_64 rng(10);
    for (std::size_t d = 1; d <= 10; ++d) {
        auto net = oracles::random_net(d, {6, 4}, d);
        auto bg = random_background(8, d, rng);
        auto x = test_support::random_matrix(1, d, rng, 2.0);
        auto s = shap_exact(probability_model(net), x.row(0), bg);
        CHECK(std::abs(s.base_value + sum(s.phi) - s.model_output) < 1e-9);
        CHECK(s.model_output == nn::forward(net, x)[0]);
    }
}

TEST_CASE("exact mode agrees with the all-permutations oracle") {
    std::mt19937_64 rng(11);
    for (std::size_t d = 1; d <= 6; ++d) {
        auto model = probability_model(oracles::random_net(d, {5}, 30 + d));
        auto bg = random_background(4, d, rng);
        auto x = test_support::random_matrix(1, d, rng);
        auto s = shap_exact(model, x.row(0), bg);
        auto o = oracles::shapley_by_permutations(model, x.row(0), bg);
        for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(s.phi[i] - o[i]) < 1e-12);
    }
}

TEST_CASE("exact mode refuses wide inputs") {
    auto f = linear(std::vector<double>(16, 1.0));
    std::vector<double> x(16, 1.0);
    CHECK_THROWS_AS(shap_exact(f, x, BackgroundSet{Matrix(1, 16)}), Error);
    CHECK_THROWS_AS(shap_exact(f, std::vector<double>(3, 1.0), BackgroundSet{Matrix(1, 2)}), ShapeError);
}

TEST_CASE("sampled mode is close to exact with many permutations") {
    std::mt19937_64 rng(12);
    auto model = probability_model(oracles::random_net(8, {10, 5}, 44));
    auto bg = random_background(10, 8, rng);
    auto x = test_support::random_matrix(1, 8, rng, 1.5);
    auto exact = shap_exact(model, x.row(0), bg);
    auto sampled = shap_sampled(model, x.row(0), bg, 2000, 3);
    double max_exact = 0.0, max_err = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        max_exact = std::max(max_exact, std::abs(exact.phi[i]));
        max_err = std::max(max_err, std::abs(sampled.phi[i] - exact.phi[i]));
    }
    CHECK(max_err < 0.05 * (max_exact + 1e-6));
    CHECK(std::abs(sampled.base_value + sum(sampled.phi) - sampled.model_output) < 1e-12);
}

TEST_CASE("sampled error shrinks as permutations double") {
    std::mt19937_64 rng(13);
    auto model = probability_model(oracles::random_net(6, {8}, 7));
    auto bg = random_background(8, 6, rng);
    auto x = test_support::random_matrix(1, 6, rng, 1.5);
    auto exact = shap_exact(model, x.row(0), bg);
    auto mse = [&](std::size_t perms) {
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto s = shap_sampled(model, x.row(0), bg, perms, seed);
            for (std::size_t i = 0; i < 6; ++i) total += (s.phi[i] - exact.phi[i]) * (s.phi[i] - exact.phi[i]);
        }
        return total / 20.0;
    };
    double prev = mse(4);
    for (std::size_t p = 8; p <= 64; p *= 2) {
        double cur = mse(p);
        CHECK(cur <= 1.1 * prev);
        prev = cur;
    }
}

TEST_CASE("sampled mode is deterministic per seed") {
    std::mt19937_64 rng(14);
    auto model = probability_model(oracles::random_net(20, {6}, 1));
    auto bg = random_background(5, 20, rng);
    auto x = test_support::random_matrix(1, 20, rng);
    auto a = shap_sampled(model, x.row(0), bg, 10, 5);
    auto b = shap_sampled(model, x.row(0), bg, 10, 5);
    CHECK(a.phi == b.phi);
    CHECK_THROWS_AS(shap_sampled(model, x.row(0), bg, 0, 5), Error);
}

TEST_CASE("global importance ranking") {
    ShapMatrix m;
    m.feature_names = {"a", "b"};
    m.rows = {ShapVector{0, {1.0, -1.0}}, ShapVector{1, {3.0, -1.0}}};
    m.feature_values = Matrix(2, 2);
    auto r = global_importance(m);
    REQUIRE(r.size() == 2);
    CHECK(r[0].feature == "a");
    CHECK(r[0].mean_abs_shap == 2.0);
    CHECK(r[1].feature == "b");
    CHECK(r[1].mean_abs_shap == 1.0);

    ShapMatrix zero;
    zero.feature_names = {"zeta", "alpha", "mid"};
    zero.rows = {ShapVector{0, {0.0, 0.0, 0.0}}};
    zero.feature_values = Matrix(1, 3);
    auto z = global_importance(zero);
    CHECK(z[0].feature == "alpha");
    CHECK(z[1].feature == "mid");
    CHECK(z[2].feature == "zeta");

    ShapMatrix single;
    single.feature_names = {"only"};
    single.rows = {ShapVector{0, {-0.5}}};
    single.feature_values = Matrix(1, 1);
    CHECK(global_importance(single)[0].feature == "only");

    CHECK_THROWS_AS(global_importance(ShapMatrix{}), Error);
}

TEST_CASE("beeswarm export rows, normalization and sign") {
    ShapMatrix one;
    one.feature_names = {"a", "b"};
    one.rows = {ShapVector{7, {-0.2, 0.4}}};
    one.feature_values = Matrix::from_rows({{1.0, 2.0}});
    auto pts = beeswarm_export(one);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].feature == "b");
    CHECK(pts[0].shap_value == 0.4);
    CHECK(pts[1].shap_value == -0.2);
    for (const auto& p : pts) {
        CHECK(p.normalized_value == 0.5);
        CHECK(p.instance_id == 7);
    }

    ShapMatrix m;
    m.feature_names = {"x"};
    m.rows = {ShapVector{0, {0.1}}, ShapVector{1, {0.2}}, ShapVector{2, {-0.3}}};
    m.feature_values = Matrix::from_rows({{2.0}, {4.0}, {3.0}});
    auto p = beeswarm_export(m);
    REQUIRE(p.size() == 3);
    CHECK(p[0].normalized_value == 0.0);
    CHECK(p[1].normalized_value == 1.0);
    CHECK(p[2].normalized_value == 0.5);
    CHECK(p[2].shap_value == -0.3);
}

TEST_CASE("csv exports carry the documented headers") {
    test_support::TempDir dir("xai");
    ShapMatrix m;
    m.feature_names = {"a", "b,c"};
    m.rows = {ShapVector{0, {0.5, -1.0}}};
    m.feature_values = Matrix::from_rows({{1.0, 2.0}});
    write_beeswarm_csv(dir.path / "bee.csv", beeswarm_export(m));
    write_bar_csv(dir.path / "bar.csv", global_importance(m));
    auto bee = test_support::read_file(dir.path / "bee.csv");
    auto bar = test_support::read_file(dir.path / "bar.csv");
    CHECK(bee.rfind("feature,shap_value,normalized_value,instance_id\n", 0) == 0);
    CHECK(bar.rfind("feature,mean_abs_shap,rank\n", 0) == 0);
    CHECK(bar.find("\"b,c\",1,1\n") != std::string::npos);
}

TEST_CASE("background sampling") {
    std::mt19937_64 rng(1);
    auto data = test_support::random_matrix(50, 3, rng);
    auto a = sample_background(data, 10, 4);
    auto b = sample_background(data, 10, 4);
    CHECK(a.size() == 10);
    CHECK(a.rows == b.rows);
    CHECK(sample_background(data, 100, 4).size() == 50);
    CHECK_THROWS_AS(sample_background(data, 0, 4), Error);
}

TEST_CASE("explain picks exact or sampled mode by width") {
    std::mt19937_64 rng(3);
    auto model = probability_model(oracles::random_net(4, {3}, 1));
    auto bg = random_background(5, 4, rng);
    auto inst = test_support::random_matrix(3, 4, rng);
    std::vector<std::size_t> ids{10, 20, 30};
    std::vector<std::string> names{"a", "b", "c", "d"};
    auto exact = explain(model, inst, ids, bg, names, {16, 10, 1});
    REQUIRE(exact.rows.size() == 3);
    CHECK(exact.rows[1].instance_id == 20);
    CHECK_FALSE(exact.rows[0].adjusted);
    CHECK(exact.rows[2].phi == shap_exact(model, inst.row(2), bg).phi);
    auto sampled = explain(model, inst, ids, bg, names, {16, 2, 1});
    CHECK(sampled.rows[0].phi != exact.rows[0].phi);
}
