#include <cmath>
#include <random>

#include "doctest.h"
#include "fedids/metrics.hpp"
#include "oracles.hpp"

using namespace fedids;
using namespace fedids::metrics;

TEST_CASE("confusion counts") {
    std::vector<int> p1{1, 0, 1, 0}, l1{1, 0, 0, 1};
    CHECK(confusion(p1, l1) == ConfusionMatrix{1, 1, 1, 1});
    std::vector<int> p2{1, 1, 0};
    CHECK(confusion(p2, p2) == ConfusionMatrix{2, 1, 0, 0});
    std::vector<int> p3(5, 0), l3(5, 1);
    CHECK(confusion(p3, l3) == ConfusionMatrix{0, 0, 0, 5});
    std::vector<int> short_l{1};
    CHECK_THROWS_AS(confusion(p1, short_l), Error);
    std::vector<int> empty;
    CHECK_THROWS_AS(confusion(empty, empty), Error);
}

TEST_CASE("NSL-KDD eight-client reference row from its confusion counts") {
    auto m = classification_metrics({14106, 15315, 137, 145});
    CHECK(std::abs(m.accuracy - 0.9905) < 5e-5);
    CHECK(std::abs(m.precision - 0.9904) < 5e-5);
    CHECK(std::abs(m.recall - 0.9898) < 5e-5);
    CHECK(std::abs(m.f1 - 0.9901) < 5e-5);
    CHECK_FALSE(m.degenerate());
}

TEST_CASE("WUSTL-EHMS two-client reference row from its confusion counts") {
    auto m = classification_metrics({212, 2849, 15, 188});
    CHECK(std::abs(m.recall - 0.53) < 5e-5);
    CHECK(std::abs(m.f1 - 0.6762) < 5e-5);
}

TEST_CASE("zero denominators report 0 with a flag") {
    auto m = classification_metrics({0, 5, 0, 3});
    CHECK(m.precision == 0.0);
    CHECK(m.precision_degenerate);
    CHECK(m.f1 == 0.0);
    CHECK(m.f1_degenerate);
    auto n = classification_metrics({0, 5, 2, 0});
    CHECK(n.recall_degenerate);
    CHECK_THROWS_AS(classification_metrics({0, 0, 0, 0}), Error);
}

TEST_CASE("property: accuracy and f1 identities") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::uint64_t> c(0, 1000);
    for (int t = 0; t < 200; ++t) {
        ConfusionMatrix cm{c(rng) + 1, c(rng), c(rng) + 1, c(rng)};
        auto m = classification_metrics(cm);
        CHECK(m.accuracy == static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total()));
        CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-15));
    }
}

TEST_CASE("auc examples") {
    std::vector<double> s1{0.9, 0.1};
    std::vector<int> l1{1, 0};
    CHECK(roc_auc(s1, l1) == 1.0);
    std::vector<double> s2{0.1, 0.4, 0.35, 0.8};
    std::vector<int> l2{0, 0, 1, 1};
    CHECK(roc_auc(s2, l2) == 0.75);
    std::vector<double> s3(6, 0.3);
    std::vector<int> l3{0, 1, 0, 1, 1, 0};
    CHECK(roc_auc(s3, l3) == 0.5);
    std::vector<int> one_class{1, 1};
    CHECK_THROWS_AS(roc_auc(s1, one_class), Error);
}

TEST_CASE("auc agrees with the pairwise and trapezoid oracles") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> size(2, 60), level(0, 9);
    std::bernoulli_distribution coin(0.4);
    for (int t = 0; t < 100; ++t) {
        const int n = size(rng);
        std::vector<double> s(n);
        std::vector<int> l(n);
        for (int i = 0; i < n; ++i) {
            s[i] = level(rng) / 10.0;  // coarse levels force ties
            l[i] = coin(rng) ? 1 : 0;
        }
        l[0] = 0;
        l[1] = 1;
        const double got = roc_auc(s, l);
        CHECK(std::abs(got - oracles::auc_pairwise(s, l)) < 1e-12);
        CHECK(std::abs(got - oracles::auc_trapezoid(s, l)) < 1e-12);
    }
}

TEST_CASE("auc is rank based: monotone transforms and negation") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> s(50), t(50), neg(50);
    std::vector<int> l(50);
    for (int i = 0; i < 50; ++i) {
        s[i] = normal(rng);
        t[i] = std::exp(3.0 * s[i]) + 1.0;
        neg[i] = -s[i];
        l[i] = i % 3 == 0 ? 1 : 0;
    }
    CHECK(roc_auc(s, l) == doctest::Approx(roc_auc(t, l)).epsilon(1e-15));
    CHECK(roc_auc(s, l) + roc_auc(neg, l) == doctest::Approx(1.0).epsilon(1e-15));
}
