#include <cmath>

#include "doctest.h"
#include "embench/embedstore.hpp"
#include "embench/metrics.hpp"

using namespace embench;

TEST_SUITE("metrics") {
  TEST_CASE("perfect predictor") {
    PredictionSet p({0, 1}, std::vector<int>{0, 1}, 2);
    CHECK(accuracy(p) == 1.0);
    CHECK(balanced_accuracy(p) == 1.0);
    CHECK(f1_score(p) == 1.0);
  }

  TEST_CASE("one class fully missed") {
    PredictionSet p({0, 0, 0, 1}, std::vector<int>{0, 0, 0, 0}, 2);
    CHECK(balanced_accuracy(p) == 0.5);
    CHECK(accuracy(p) == 0.75);
  }

  TEST_CASE("macro F1 against hand confusion counts") {
    // class 0: tp 1, fp 1, fn 1 -> 0.5 ; class 1: tp 2, fp 1, fn 1 -> 2/3
    PredictionSet p({0, 0, 1, 1, 1}, std::vector<int>{0, 1, 1, 1, 0}, 2);
    CHECK(f1_score(p) == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  }

  TEST_CASE("macro F1 averages over classes present in y_true") {
    // class 2 never appears in y_true; a spurious prediction of it costs only through class 0 recall
    PredictionSet p({0, 0, 1}, std::vector<int>{0, 2, 1}, 3);
    CHECK(f1_score(p) == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
  }

  TEST_CASE("balanced binary data: accuracy equals balanced accuracy") {
    PredictionSet p({0, 0, 1, 1}, std::vector<int>{0, 1, 1, 0}, 2);
    CHECK(accuracy(p) == balanced_accuracy(p));
  }

  TEST_CASE("probabilities give argmax predictions and confidences") {
    PredictionSet p({1, 0}, std::vector<double>{0.2, 0.8, 0.5, 0.5}, 2);
    CHECK(p.y_pred() == std::vector<int>{1, 0});
    CHECK(p.confidence(0) == 0.8);
    CHECK(p.correctness() == std::vector<std::uint8_t>{1, 1});
  }

  TEST_CASE("dice and jaccard") {
    std::vector<std::uint8_t> a(16, 0), b(16, 0);
    for (int i = 0; i < 8; ++i) a[i] = 1;
    CHECK(dice_jaccard(a, a, 2, 0).dice == 1.0);
    for (int i = 8; i < 16; ++i) b[i] = 1;
    auto disjoint = dice_jaccard(a, b, 2, 0);
    CHECK(disjoint.dice == 0.0);
    CHECK(disjoint.jaccard == 0.0);
    std::fill(b.begin(), b.end(), 0);
    for (int i = 4; i < 12; ++i) b[i] = 1;
    auto half = class_overlap(a, b, 1);
    REQUIRE(half.has_value());
    CHECK(half->dice == doctest::Approx(0.5));
    CHECK(half->jaccard == doctest::Approx(1.0 / 3.0));
    std::vector<std::uint8_t> none(16, 0);
    CHECK_FALSE(class_overlap(none, none, 1).has_value());
  }

  TEST_CASE("bootstrap on constant values") {
    std::vector<double> v{5, 5, 5, 5};
    auto ci = bootstrap_mean_ci(v, {.resamples = 100});
    CHECK(ci.point == 5.0);
    CHECK(ci.lo == 5.0);
    CHECK(ci.hi == 5.0);
  }

  TEST_CASE("bootstrap is seeded and deterministic") {
    std::vector<double> v{1, 4, 2, 8, 5, 7};
    BootstrapOptions o{.resamples = 500, .level = 0.9, .seed = 99};
    auto a = bootstrap_mean_ci(v, o), b = bootstrap_mean_ci(v, o);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    o.threads = 3;
    auto c = bootstrap_mean_ci(v, o);
    CHECK(c.lo == a.lo);
    CHECK(c.hi == a.hi);
  }

  TEST_CASE("bootstrap width of a fair Bernoulli mean") {
    std::vector<double> v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % 2 ? 1.0 : 0.0;
    auto ci = bootstrap_mean_ci(v, {.resamples = 3000, .seed = 1});
    CHECK(ci.hi - ci.lo == doctest::Approx(2 * 1.96 * std::sqrt(0.25 / 1000)).epsilon(0.01 / 0.062));
    CHECK(std::abs((ci.hi - ci.lo) - 0.062) <= 0.01);
  }

  TEST_CASE("quantile of sorted data") {
    std::vector<double> s{1, 2, 3, 4, 5};
    CHECK(quantile_sorted(s, 0.0) == 1.0);
    CHECK(quantile_sorted(s, 1.0) == 5.0);
    CHECK(quantile_sorted(s, 0.5) == 3.0);
  }

  TEST_CASE("segmentation score weights background") {
    std::vector<std::uint8_t> m(2 * 4, 0);
    for (int i = 4; i < 8; ++i) m[i] = 1;
    SegMaskSet truth({"a", "b"}, 2, 2, 2, 0, m);
    auto s = segmentation_score(truth, truth, 0.1);
    CHECK(s.dice == doctest::Approx(1.0));
    CHECK(s.per_patch.size() == 2);
  }
}
