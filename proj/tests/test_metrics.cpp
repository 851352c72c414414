#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlfccm/core.hpp"
#include "dlfccm/metrics.hpp"

#include <vector>

using namespace dlfccm;

namespace {

// Confusion-matrix oracle: per-class counts by scanning the whole list for each class.
EvalMetrics brute_force(const std::vector<int>& y, const std::vector<int>& p, int n_classes) {
  EvalMetrics m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += y[i] == p[i];
  m.accuracy = static_cast<double>(hits) / static_cast<double>(y.size());
  for (int c = 0; c < n_classes; ++c) {
    double t = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == c && p[i] == c) t += 1;
      if (y[i] != c && p[i] == c) fp += 1;
      if (y[i] == c && p[i] != c) fn += 1;
    }
    const double prec = t + fp > 0 ? t / (t + fp) : 0.0;
    const double rec = t + fn > 0 ? t / (t + fn) : 0.0;
    m.macro_precision += prec / n_classes;
    m.macro_recall += rec / n_classes;
    m.macro_f1 += (prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0) / n_classes;
  }
  return m;
}

}  // namespace

TEST_CASE("confusion matrix example") {
  // rows = true class: [[2,0,0,0],[0,2,0,0],[0,0,2,0],[2,0,0,0]]
  const std::vector<int> y{0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<int> p{0, 0, 1, 1, 2, 2, 0, 0};
  const EvalMetrics m = compute_metrics(y, p, 4);
  CHECK(m.accuracy == doctest::Approx(0.75));
  CHECK(m.macro_precision == doctest::Approx(0.625));
  CHECK(m.macro_recall == doctest::Approx(0.75));
  // Per-class F1 = (2/3, 1, 1, 0).
  CHECK(m.macro_f1 == doctest::Approx((2.0 / 3.0 + 2.0) / 4.0));
  CHECK(m.macro_f1 == doctest::Approx(brute_force(y, p, 4).macro_f1));
}

TEST_CASE("constant predictions") {
  const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3};
  const std::vector<int> p(8, 1);
  const EvalMetrics m = compute_metrics(y, p, 4);
  CHECK(m.accuracy == doctest::Approx(0.25));
  CHECK(m.macro_precision == doctest::Approx(0.25 / 4));
  CHECK(m.macro_recall == doctest::Approx(0.25));
  CHECK(m.macro_f1 == doctest::Approx((2 * 0.25 * 1.0 / 1.25) / 4));
}

TEST_CASE("absent classes count toward the macro mean") {
  const std::vector<int> y{0, 0};
  const EvalMetrics m = compute_metrics(y, y, 4);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_precision == doctest::Approx(0.25));
  CHECK(m.macro_f1 == doctest::Approx(0.25));
}

TEST_CASE("errors") {
  const std::vector<int> empty;
  CHECK_THROWS_AS(compute_metrics(empty, empty, 4), std::invalid_argument);
  const std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS_AS(compute_metrics(a, b, 4), std::invalid_argument);
  const std::vector<int> bad{4, 0};
  CHECK_THROWS_AS(compute_metrics(bad, a, 4), std::invalid_argument);
}

TEST_CASE("agrees with the brute-force oracle on random label vectors") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(60);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(4));
      p[i] = rng.bernoulli(0.5) ? y[i] : static_cast<int>(rng.index(4));
    }
    const EvalMetrics got = compute_metrics(y, p, 4);
    const EvalMetrics want = brute_force(y, p, 4);
    CHECK(got.accuracy == doctest::Approx(want.accuracy).epsilon(1e-12));
    CHECK(got.macro_precision == doctest::Approx(want.macro_precision).epsilon(1e-12));
    CHECK(got.macro_recall == doctest::Approx(want.macro_recall).epsilon(1e-12));
    CHECK(got.macro_f1 == doctest::Approx(want.macro_f1).epsilon(1e-12));
    for (double v : {got.accuracy, got.macro_precision, got.macro_recall, got.macro_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("quantiles") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4, 1, 3, 2}, 0.25) == doctest::Approx(1.75));
  CHECK(median({5}) == 5.0);
  const std::vector<double> v{3, 1, 2, 5, 4};
  const FiveNumber f = five_number_summary(v);
  CHECK(f.min == 1);
  CHECK(f.q1 == 2);
  CHECK(f.median == 3);
  CHECK(f.q3 == 4);
  CHECK(f.max == 5);
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}
