#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "incctr/evaluation.hpp"
#include "incctr/rng.hpp"

using namespace incctr;

namespace {

// O(n^2) pairwise oracle with the same integral-numerator trick, so equality
// with the rank formulation is exact.
double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::uint64_t numer2 = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      ++n_pos;
      continue;
    }
    ++n_neg;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!labels[j]) continue;
      if (scores[j] > scores[i])
        numer2 += 2;
      else if (scores[j] == scores[i])
        numer2 += 1;
    }
  }
  return static_cast<double>(numer2) / (2.0 * static_cast<double>(n_pos) * n_neg);
}

}  // namespace

TEST_CASE("auc on separated and inverted inputs") {
  std::vector<double> scores = {0.9, 0.8, 0.2, 0.1};
  std::vector<std::uint8_t> labels = {1, 1, 0, 0};
  CHECK(auc(scores, labels) == 1.0);

  std::vector<std::uint8_t> inverted = {0, 0, 1, 1};
  CHECK(auc(scores, inverted) == 0.0);

  // Antisymmetry with ties: auc(s, y) + auc(s, 1-y) = 1.
  Rng rng(6);
  for (int iter = 0; iter < 30; ++iter) {
    std::vector<double> s;
    std::vector<std::uint8_t> y, ny;
    for (int i = 0; i < 60; ++i) {
      s.push_back(static_cast<double>(rng.below(10)));  // many ties
      y.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 1) == 60)
      continue;
    for (auto v : y) ny.push_back(v ? 0 : 1);
    CHECK(auc(s, y) + auc(s, ny) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("auc equals the pairwise oracle exactly on random tied instances") {
  Rng rng(2718);
  for (int iter = 0; iter < 100; ++iter) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back(static_cast<double>(rng.below(1 + rng.below(40))));
      const bool pos = rng.bernoulli(0.5);
      labels.push_back(pos);
      has_pos |= pos;
      has_neg |= !pos;
    }
    if (!has_pos || !has_neg) {
      labels[0] = has_pos ? 0 : 1;
    }
    CHECK(auc(scores, labels) == pairwise_auc(scores, labels));
  }
}

TEST_CASE("auc rejects single-class input") {
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), DataError);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), DataError);
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
  Rng rng(44);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 150; ++i) {
    scores.push_back(rng.uniform_signed(3.0));
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  labels[0] = 1;
  labels[1] = 0;
  const double base = auc(scores, labels);

  std::vector<double> affine, cubic;
  for (double s : scores) {
    affine.push_back(2.5 * s + 7.0);
    cubic.push_back(s * s * s);
  }
  CHECK(auc(affine, labels) == base);
  CHECK(auc(cubic, labels) == base);
}

TEST_CASE("logloss values and oracle agreement") {
  CHECK(logloss({0.5, 0.5, 0.5}, {1, 0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const double eps = 1e-7;
  CHECK(logloss({1.0}, {1}, eps) == doctest::Approx(-std::log(1.0 - eps)).epsilon(1e-9));

  Rng rng(88);
  std::vector<double> preds;
  std::vector<std::uint8_t> labels;
  long double oracle = 0.0L;
  for (int i = 0; i < 64; ++i) {
    const double p = 1e-5 + 0.99998 * rng.uniform();
    const bool y = rng.bernoulli(0.5);
    preds.push_back(p);
    labels.push_back(y);
    oracle += y ? -std::log(static_cast<long double>(p))
                : -std::log(1.0L - static_cast<long double>(p));
  }
  oracle /= 64.0L;
  CHECK(std::fabs(logloss(preds, labels) - static_cast<double>(oracle)) < 1e-12);

  CHECK_THROWS_AS(logloss({}, {}), DataError);
}

TEST_CASE("constant predictor logloss is minimized at the base rate") {
  std::vector<std::uint8_t> labels;
  Rng rng(9);
  for (int i = 0; i < 500; ++i) labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
  double base_rate = 0.0;
  for (auto y : labels) base_rate += y;
  base_rate /= labels.size();

  auto const_loss = [&](double p) {
    return logloss(std::vector<double>(labels.size(), p), labels);
  };
  const double at_base = const_loss(base_rate);
  for (double p = 0.05; p < 1.0; p += 0.05) CHECK(const_loss(p) >= at_base - 1e-12);
}

TEST_CASE("metrics rows round-trip through the log format") {
  std::vector<MetricsRow> rows = {{7, "ft", 0.71234, 0.65432, 1, 153.25},
                                  {7, "batch0", 0.70999, 0.66001, 2, 1200.5},
                                  {8, "ft", 0.7234, 0.6511, 1, 149.75}};
  std::string text = metrics_header() + "\n";
  for (const auto& row : rows) text += format_metrics_row(row) + "\n";
  auto parsed = parse_metrics_log(text);
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0].arm == "ft");
  CHECK(parsed[0].step == 7);
  CHECK(parsed[0].auc == doctest::Approx(0.71234));
  CHECK(parsed[1].wall_ms == doctest::Approx(1200.5));
}

TEST_CASE("efficiency summary reproduces hand-computed means and speedups") {
  std::vector<MetricsRow> rows = {
      {7, "batch0", 0.70, 0.60, 2, 10000.0}, {8, "batch0", 0.72, 0.59, 2, 10000.0},
      {9, "batch0", 0.74, 0.58, 2, 10000.0}, {7, "ft", 0.71, 0.60, 1, 1000.0},
      {8, "ft", 0.73, 0.59, 1, 1000.0},      {9, "ft", 0.75, 0.58, 1, 1000.0},
  };
  auto summaries = efficiency_summary(rows, "batch0");
  REQUIRE(summaries.size() == 2);
  const ArmSummary& batch = summaries[0].arm == "batch0" ? summaries[0] : summaries[1];
  const ArmSummary& ft = summaries[0].arm == "ft" ? summaries[0] : summaries[1];
  CHECK(batch.updates == 3);
  CHECK(batch.mean_auc == doctest::Approx(0.72));
  CHECK(batch.avg_epochs == doctest::Approx(2.0));
  CHECK(ft.mean_auc == doctest::Approx(0.73));
  CHECK(ft.avg_epochs == doctest::Approx(1.0));  // fine-tune arm reports one epoch
  CHECK(ft.speedup == doctest::Approx(10.0));    // 10 s vs 1 s per update
  CHECK(batch.speedup == doctest::Approx(1.0));

  CHECK_THROWS_AS(efficiency_summary({}, "batch0"), DataError);
}

TEST_CASE("evaluate fills the report fields") {
  EvalReport rep = evaluate({0.9, 0.4, 0.8, 0.1}, {1, 0, 1, 0});
  CHECK(rep.auc == 1.0);
  CHECK(rep.n_samples == 4);
  CHECK(rep.positives == 2);
  CHECK(std::isfinite(rep.logloss));
}
