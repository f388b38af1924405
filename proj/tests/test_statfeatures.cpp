#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "hybridsentry/common.hpp"
#include "hybridsentry/statfeatures.hpp"

using namespace hybridsentry;
using namespace hybridsentry::statfeatures;

namespace {

constexpr double kTol = 1e-9;

std::vector<double> random_window(Rng& rng, std::size_t n = 90) {
  std::vector<double> w(n);
  double level = rng.normal();
  for (auto& x : w) {
    level += 0.1 * rng.normal();
    x = level + rng.normal(0, 0.5);
  }
  return w;
}

std::size_t index_of(std::string_view name) {
  const auto& m = feature_manifest();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].name == name) return i;
  }
  FAIL("unknown feature " << name);
  return 0;
}

}  // namespace

TEST_CASE("basic stats of 1..5") {
  const std::vector<double> w{1, 2, 3, 4, 5};
  const auto b = basic_stats(w);
  CHECK(b.mean == doctest::Approx(3.0).epsilon(kTol));
  CHECK(b.median == doctest::Approx(3.0).epsilon(kTol));
  CHECK(b.variance == doctest::Approx(2.0).epsilon(kTol));
  CHECK(b.std == doctest::Approx(std::sqrt(2.0)).epsilon(kTol));
  CHECK(b.p25 == doctest::Approx(2.0).epsilon(kTol));
  CHECK(b.p75 == doctest::Approx(4.0).epsilon(kTol));
  CHECK(b.iqr == doctest::Approx(2.0).epsilon(kTol));
  CHECK(b.p95 == doctest::Approx(4.8).epsilon(kTol));
  CHECK(std::abs(b.skewness) < kTol);
  // m4 = (16+1+0+1+16)/5 = 6.8, m2 = 2 -> 6.8/4 - 3
  CHECK(b.kurtosis_excess == doctest::Approx(-1.3).epsilon(kTol));
  CHECK(b.min == 1.0);
  CHECK(b.max == 5.0);
}

TEST_CASE("basic stats degenerate and mirrored windows") {
  const auto c = basic_stats(std::vector<double>(90, 7.0));
  CHECK(c.mean == 7.0);
  CHECK(c.std == 0.0);
  CHECK(c.skewness == 0.0);
  CHECK(c.kurtosis_excess == 0.0);
  CHECK(c.iqr == 0.0);

  Rng rng(1);
  const auto w = random_window(rng);
  std::vector<double> mirror(w.size());
  std::transform(w.begin(), w.end(), mirror.begin(), [](double x) { return -x; });
  const auto a = basic_stats(w);
  const auto b = basic_stats(mirror);
  CHECK(b.skewness == doctest::Approx(-a.skewness).epsilon(kTol));
  CHECK(b.variance == doctest::Approx(a.variance).epsilon(kTol));
  CHECK(b.kurtosis_excess == doctest::Approx(a.kurtosis_excess).epsilon(kTol));
  CHECK_THROWS_AS(basic_stats(std::vector<double>{1, 2, 3}), DataError);
}

TEST_CASE("basic stats ordering invariants") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = basic_stats(random_window(rng, 4 + rng.below(120)));
    CHECK(b.min <= b.p25);
    CHECK(b.p25 <= b.median);
    CHECK(b.median <= b.p75);
    CHECK(b.p75 <= b.max);
    CHECK(b.iqr == doctest::Approx(b.p75 - b.p25).epsilon(1e-12));
    CHECK(b.variance == doctest::Approx(b.std * b.std).epsilon(1e-12));
  }
}

TEST_CASE("trend features of 1..5") {
  const auto t = trend_features(std::vector<double>{1, 2, 3, 4, 5});
  CHECK(t.slope == doctest::Approx(1.0).epsilon(kTol));
  CHECK(t.intercept == doctest::Approx(1.0).epsilon(kTol));
  CHECK(t.monotonicity == doctest::Approx(1.0).epsilon(kTol));
  CHECK(t.r_squared == doctest::Approx(1.0).epsilon(kTol));
  CHECK(t.recent_past_ratio == doctest::Approx(4.5 / 1.5).epsilon(kTol));
}

TEST_CASE("trend features of flat and reversed windows") {
  const auto flat = trend_features(std::vector<double>(90, 2.5));
  CHECK(flat.slope == 0.0);
  CHECK(flat.r_squared == 0.0);
  CHECK(flat.monotonicity == 0.0);
  CHECK(flat.recent_past_ratio == 1.0);

  Rng rng(3);
  const auto w = random_window(rng);
  auto rev = w;
  std::reverse(rev.begin(), rev.end());
  const auto a = trend_features(w);
  const auto b = trend_features(rev);
  CHECK(b.slope == doctest::Approx(-a.slope).epsilon(kTol));
  CHECK(b.r_squared == doctest::Approx(a.r_squared).epsilon(kTol));
}

TEST_CASE("trend invariants") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = trend_features(random_window(rng, 4 + rng.below(120)));
    CHECK(t.monotonicity >= 0.0);
    CHECK(t.monotonicity <= 1.0);
    CHECK(t.r_squared >= 0.0);
    CHECK(t.r_squared <= 1.0);
  }
}

TEST_CASE("drawdown trace of 3 5 4 2 6") {
  // runmax 3 5 5 5 6, drawdown 0 0 1 3 0
  const auto v = volatility_features(std::vector<double>{3, 5, 4, 2, 6});
  CHECK(v.max_drawdown == doctest::Approx(3.0).epsilon(kTol));
  CHECK(v.avg_drawdown == doctest::Approx(0.8).epsilon(kTol));
  CHECK(v.drawdown_duration == doctest::Approx(2.0).epsilon(kTol));
  // |diffs| 2 1 2 4
  CHECK(v.succ_diff_mean == doctest::Approx(2.25).epsilon(kTol));
  CHECK(v.succ_diff_std == doctest::Approx(std::sqrt(1.1875)).epsilon(kTol));
}

TEST_CASE("zero crossings of an alternating window") {
  const std::vector<double> w{1, -1, 1, -1, 1};
  CHECK(basic_stats(w).mean == doctest::Approx(0.2).epsilon(kTol));
  CHECK(volatility_features(w).zero_crossing_rate == doctest::Approx(1.0).epsilon(kTol));
}

TEST_CASE("rolling stds average complete sub-windows") {
  std::vector<double> w(10);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(i % 2);
  const auto v = volatility_features(w);
  // every 7-wide sub-window holds 4/3 or 3/4 of each value
  CHECK(v.rolling_std_7 == doctest::Approx(std::sqrt(12.0) / 7.0).epsilon(kTol));
  CHECK(v.rolling_std_30 == doctest::Approx(0.5).epsilon(kTol));
}

TEST_CASE("volatility of a constant window") {
  const auto v = volatility_features(std::vector<double>(90, 7.0));
  CHECK(v.max_drawdown == 0.0);
  CHECK(v.avg_drawdown == 0.0);
  CHECK(v.drawdown_duration == 0.0);
  CHECK(v.succ_diff_mean == 0.0);
  CHECK(v.succ_diff_std == 0.0);
  CHECK(v.rolling_std_7 == 0.0);
  CHECK(v.rolling_std_14 == 0.0);
  CHECK(v.rolling_std_30 == 0.0);
  CHECK(v.zero_crossing_rate == 0.0);
}

TEST_CASE("volatility invariants") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto w = random_window(rng, 4 + rng.below(120));
    const auto v = volatility_features(w);
    CHECK(v.rolling_std_7 >= 0.0);
    CHECK(v.rolling_std_14 >= 0.0);
    CHECK(v.rolling_std_30 >= 0.0);
    CHECK(v.max_drawdown >= v.avg_drawdown);
    CHECK(v.avg_drawdown >= 0.0);
    CHECK(v.zero_crossing_rate >= 0.0);
    CHECK(v.zero_crossing_rate <= 1.0);
    CHECK(v.drawdown_duration >= 0.0);
    CHECK(v.drawdown_duration <= static_cast<double>(w.size()));
  }
}

TEST_CASE("constant window gives the degenerate vector") {
  const auto f = extract_stat_features(std::vector<double>(90, 7.0));
  const StatFeatureVector expected{7, 7, 0, 0, 0, 7, 7, 7, 0, 0, 7, 7, 0, 7, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < kStatFeatureCount; ++i) {
    CAPTURE(feature_manifest()[i].name);
    CHECK(f[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("feature vector layout and determinism") {
  Rng rng(6);
  const auto w = random_window(rng);
  const auto f = extract_stat_features(w);
  CHECK(f.size() == 28);
  CHECK(f == extract_stat_features(w));

  const auto b = basic_stats(w);
  const auto t = trend_features(w);
  const auto v = volatility_features(w);
  CHECK(f[index_of("mean")] == b.mean);
  CHECK(f[index_of("kurtosis_excess")] == b.kurtosis_excess);
  CHECK(f[index_of("trend_slope")] == t.slope);
  CHECK(f[index_of("trend_r_squared")] == t.r_squared);
  CHECK(f[index_of("rolling_std_30")] == v.rolling_std_30);
  CHECK(f[index_of("range_ratio")] == v.range_ratio);
}

TEST_CASE("manifest is 12 + 5 + 11 unique names") {
  const auto& m = feature_manifest();
  std::set<std::string> names;
  int basic = 0, trend = 0, vol = 0;
  for (const auto& spec : m) {
    names.emplace(spec.name);
    basic += spec.group == "basic";
    trend += spec.group == "trend";
    vol += spec.group == "volatility";
  }
  CHECK(names.size() == 28);
  CHECK(basic == 12);
  CHECK(trend == 5);
  CHECK(vol == 11);
  const auto j = manifest_json();
  CHECK(j["features"].size() == 28);
  CHECK(j["features"][14]["name"] == "recent_past_ratio");
}

TEST_CASE("shift invariance") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_window(rng);
    auto shifted = w;
    const double c = rng.uniform(-20, 20);
    for (auto& x : shifted) x += c;
    const auto a = extract_stat_features(w);
    const auto b = extract_stat_features(shifted);
    for (const char* name : {"std", "variance", "iqr", "trend_slope", "monotonicity", "trend_r_squared",
                             "max_drawdown", "avg_drawdown", "drawdown_duration", "succ_diff_mean",
                             "succ_diff_std", "rolling_std_7", "rolling_std_14", "rolling_std_30",
                             "zero_crossing_rate"}) {
      CAPTURE(name);
      const auto i = index_of(name);
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("scale equivariance") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_window(rng);
    auto scaled = w;
    const double s = rng.uniform(0.1, 10);
    for (auto& x : scaled) x *= s;
    const auto a = extract_stat_features(w);
    const auto b = extract_stat_features(scaled);
    for (const char* name : {"std", "iqr", "max_drawdown", "avg_drawdown", "succ_diff_mean", "rolling_std_7",
                             "rolling_std_14", "rolling_std_30"}) {
      CAPTURE(name);
      const auto i = index_of(name);
      CHECK(b[i] == doctest::Approx(s * a[i]).epsilon(1e-9));
    }
    for (const char* name : {"monotonicity", "trend_r_squared", "zero_crossing_rate"}) {
      CAPTURE(name);
      const auto i = index_of(name);
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
    }
    auto positive = w;
    for (auto& x : positive) x += 10.0;
    auto positive_scaled = positive;
    for (auto& x : positive_scaled) x *= s;
    const auto cv = index_of("coef_variation");
    CHECK(extract_stat_features(positive_scaled)[cv] ==
          doctest::Approx(extract_stat_features(positive)[cv]).epsilon(1e-6));
  }
}

TEST_CASE("percentile ratios stay outside the canonical vector") {
  const auto r = percentile_ratios(std::vector<double>{1, 2, 3, 4, 5});
  CHECK(r[0] == doctest::Approx(4.8 / 1.2).epsilon(kTol));
  CHECK(r[1] == doctest::Approx(2.0).epsilon(kTol));
}

TEST_CASE("standardizer fixtures") {
  std::vector<StatFeatureVector> rows(2);
  rows[0].fill(5.0);
  rows[1].fill(5.0);
  rows[0][0] = 2.0;
  rows[1][0] = 4.0;
  const auto s = FeatureStandardizer::fit(rows);
  const auto a = s.apply(rows[0]);
  const auto b = s.apply(rows[1]);
  CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(b[0] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t j = 1; j < kStatFeatureCount; ++j) {
    CHECK(a[j] == 0.0);
    CHECK(b[j] == 0.0);
  }
  CHECK_THROWS_AS(FeatureStandardizer::fit(std::span<const StatFeatureVector>(rows.data(), 1)), DataError);
  CHECK_THROWS_AS((void)FeatureStandardizer().apply(rows[0]), DataError);
}

TEST_CASE("standardized training columns have zero mean and unit variance") {
  Rng rng(9);
  std::vector<StatFeatureVector> rows;
  for (int i = 0; i < 300; ++i) rows.push_back(extract_stat_features(random_window(rng)));
  for (auto& r : rows) r[index_of("drawdown_duration")] = 3.0;
  const auto s = FeatureStandardizer::fit(rows);
  std::vector<StatFeatureVector> z;
  for (const auto& r : rows) z.push_back(s.apply(r));
  for (std::size_t j = 0; j < kStatFeatureCount; ++j) {
    double mean = 0.0;
    for (const auto& r : z) mean += r[j];
    mean /= static_cast<double>(z.size());
    double var = 0.0;
    for (const auto& r : z) var += (r[j] - mean) * (r[j] - mean);
    var /= static_cast<double>(z.size());
    CAPTURE(feature_manifest()[j].name);
    CHECK(std::abs(mean) < 1e-9);
    if (j == index_of("drawdown_duration")) {
      CHECK(var == 0.0);
    } else {
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
  const auto back = FeatureStandardizer::from_json(s.to_json());
  CHECK(back.means() == s.means());
  CHECK(back.stds() == s.stds());
}
