#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hybridsentry/common.hpp"
#include "hybridsentry/eval.hpp"
#include "oracles.hpp"

using namespace hybridsentry;
using namespace hybridsentry::eval;

namespace {

struct Scored {
  std::vector<std::uint8_t> labels;
  std::vector<double> scores;
};

Scored random_scored(Rng& rng, std::size_t n, std::uint64_t levels) {
  Scored s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = rng.uniform() < 0.3;
    s.labels.push_back(pos ? 1 : 0);
    const auto base = rng.below(levels);
    s.scores.push_back(static_cast<double>(std::min<std::uint64_t>(levels - 1, base + (pos ? rng.below(3) : 0))) /
                       static_cast<double>(levels));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

}  // namespace

TEST_CASE("confusion fixtures") {
  const std::vector<std::uint8_t> y{1, 0};
  CHECK(confusion_at(y, std::vector<double>{0.9, 0.1}) == ConfusionCounts{1, 0, 0, 1});
  CHECK(confusion_at(y, std::vector<double>{0.5, 0.5}) == ConfusionCounts{1, 1, 0, 0});
  CHECK_THROWS_AS(confusion_at({}, {}), DataError);
  CHECK_THROWS_AS(confusion_at(y, std::vector<double>{0.5}), DataError);
}

TEST_CASE("metrics from reported counts") {
  const ConfusionCounts c{738, 46, 46, 8315};
  const auto m = classification_metrics(c);
  CHECK(m.precision == doctest::Approx(738.0 / 784.0).epsilon(1e-12));
  CHECK(m.precision == doctest::Approx(0.9413).epsilon(1e-4));
  CHECK(m.recall == doctest::Approx(738.0 / 784.0).epsilon(1e-12));
  CHECK(m.fpr == doctest::Approx(46.0 / 8361.0).epsilon(1e-12));
  CHECK(m.fpr == doctest::Approx(0.0055).epsilon(1e-2));
  CHECK(std::round(m.fpr * 1000.0) / 10.0 == doctest::Approx(0.6));
}

TEST_CASE("metric conventions") {
  const auto m = classification_metrics({1, 1, 0, 0});
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(m.fpr == 1.0);

  const auto z = classification_metrics({0, 0, 3, 5});
  CHECK(z.precision == 0.0);
  CHECK(z.precision_undefined);
  CHECK_FALSE(z.recall_undefined);
  CHECK(z.f1_undefined);
  CHECK(classification_metrics({2, 0, 0, 0}).fpr_undefined);
}

TEST_CASE("roc_auc fixtures") {
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(roc_auc(y, std::vector<double>{0.1, 0.4, 0.35, 0.8}) == 0.75);
  CHECK(roc_auc(y, std::vector<double>{0.1, 0.2, 0.3, 0.4}) == 1.0);
  CHECK(roc_auc(y, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<std::uint8_t>{1, 1}, std::vector<double>{0.1, 0.2}), DataError);
}

TEST_CASE("roc_auc equals brute-force pair counting with ties") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_scored(rng, 2 + rng.below(199), 1 + rng.below(20));
    CAPTURE(trial);
    CHECK(roc_auc(s.labels, s.scores) == oracle::pairwise_auc(s.labels, s.scores));
  }
}

TEST_CASE("roc_auc rank invariance and complement") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Scored s;
    for (int i = 0; i < 150; ++i) {
      s.labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
      s.scores.push_back(rng.normal() + (s.labels.back() ? 0.7 : 0.0));
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    const double auc = roc_auc(s.labels, s.scores);
    std::vector<double> transformed, negated;
    for (double v : s.scores) {
      transformed.push_back(std::exp(2.0 * v) - 3.0);
      negated.push_back(-v);
    }
    CHECK(roc_auc(s.labels, transformed) == auc);
    CHECK(roc_auc(s.labels, negated) + auc == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("threshold sweep is monotone and its trapezoid matches the pair statistic") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scored(rng, 2 + rng.below(300), 1 + rng.below(50));
    const auto curve = threshold_sweep(s.labels, s.scores);
    CHECK(curve.front().fpr == 0.0);
    CHECK(curve.front().tpr == 0.0);
    CHECK(curve.back().fpr == 1.0);
    CHECK(curve.back().tpr == 1.0);
    for (std::size_t i = 1; i < curve.size(); ++i) {
      CHECK(curve[i].threshold < curve[i - 1].threshold);
      CHECK(curve[i].fpr >= curve[i - 1].fpr);
      CHECK(curve[i].tpr >= curve[i - 1].tpr);
    }
    CHECK(std::abs(trapezoid_auc(curve) - roc_auc(s.labels, s.scores)) < 1e-9);
    const double ap = average_precision(curve);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
  }
}

TEST_CASE("concentration diagnostic") {
  const std::vector<double> narrow{0.51, 0.515, 0.52, 0.525, 0.53};
  CHECK(concentration_diagnostic(narrow).flagged);
  CHECK(concentration_diagnostic(std::vector<double>(100, 0.52)).flagged);
  const auto constant = concentration_diagnostic(std::vector<double>(10, 0.5));
  CHECK(constant.central_width == 0.0);
  CHECK(constant.std == 0.0);
  CHECK(constant.flagged);

  Rng rng(4);
  std::vector<double> uniform(1000);
  for (auto& p : uniform) p = rng.uniform();
  const auto d = concentration_diagnostic(uniform);
  CHECK_FALSE(d.flagged);
  CHECK(d.central_width == doctest::Approx(0.9).epsilon(0.05));
  CHECK_THROWS_AS(concentration_diagnostic({}), DataError);
}

TEST_CASE("report metrics agree with counts and survive serialization") {
  Rng rng(5);
  const auto s = random_scored(rng, 500, 40);
  const auto r = evaluate(30, s.labels, s.scores, 0.5);
  CHECK(r.counts.total() == 500);
  CHECK(r.n_samples == 500);
  const auto m = classification_metrics(r.counts);
  CHECK(m.precision == r.metrics.precision);
  CHECK(m.recall == r.metrics.recall);
  CHECK(m.f1 == r.metrics.f1);
  CHECK(m.fpr == r.metrics.fpr);
  std::uint64_t hist_total = 0;
  for (auto c : r.probability_histogram) hist_total += c;
  CHECK(hist_total == 500);
  REQUIRE(r.roc_auc.has_value());
  CHECK(*r.roc_auc == roc_auc(s.labels, s.scores));

  const auto back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  const auto again = classification_metrics(back.counts);
  CHECK(again.precision == back.metrics.precision);
  CHECK(again.recall == back.metrics.recall);
  CHECK(again.f1 == back.metrics.f1);
  CHECK(again.fpr == back.metrics.fpr);
  CHECK(back.to_json().dump() == r.to_json().dump());
}

TEST_CASE("single-class evaluation leaves AUC unset") {
  const std::vector<std::uint8_t> y(20, 0);
  const std::vector<double> p(20, 0.2);
  const auto r = evaluate(60, y, p);
  CHECK_FALSE(r.roc_auc.has_value());
  CHECK(r.counts.tn == 20);
  CHECK(r.metrics.recall_undefined);
}
