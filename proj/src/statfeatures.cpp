#include "hybridsentry/statfeatures.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hybridsentry/common.hpp"
#include "hybridsentry/numeric.hpp"

namespace hybridsentry::statfeatures {

namespace {

constexpr std::array<FeatureSpec, kStatFeatureCount> kManifest{{
    {"mean", "basic", "sum(x)/L"},
    {"median", "basic", "P50, linear interpolation at rank 0.5*(L-1)"},
    {"std", "basic", "sqrt(variance)"},
    {"variance", "basic", "sum((x-mean)^2)/L"},
    {"iqr", "basic", "p75 - p25"},
    {"p25", "basic", "P25, linear interpolation"},
    {"p75", "basic", "P75, linear interpolation"},
    {"p95", "basic", "P95, linear interpolation"},
    {"skewness", "basic", "m3/m2^1.5 (0 when m2 = 0)"},
    {"kurtosis_excess", "basic", "m4/m2^2 - 3 (Fisher; 0 when m2 = 0)"},
    {"min", "basic", "min(x)"},
    {"max", "basic", "max(x)"},
    {"trend_slope", "trend", "OLS beta1 of x_t = beta0 + beta1*t, t = 0..L-1"},
    {"trend_intercept", "trend", "OLS beta0"},
    {"recent_past_ratio", "trend", "mean(last k)/guard(mean(first k)), k = min(15, L/2), sign-preserving eps"},
    {"monotonicity", "trend", "#{x_{t+1} - x_t > 0}/(L-1)"},
    {"trend_r_squared", "trend", "1 - SS_res/SS_tot (0 when SS_tot = 0)"},
    {"rolling_std_7", "volatility", "mean of population std over all 7-day sub-windows"},
    {"rolling_std_14", "volatility", "mean of population std over all 14-day sub-windows"},
    {"rolling_std_30", "volatility", "mean of population std over all 30-day sub-windows"},
    {"coef_variation", "volatility", "std/(|mean| + eps)"},
    {"max_drawdown", "volatility", "max(runmax_t - x_t), absolute"},
    {"avg_drawdown", "volatility", "mean(runmax_t - x_t), absolute"},
    {"drawdown_duration", "volatility", "longest run of days with runmax_t - x_t > 0"},
    {"zero_crossing_rate", "volatility", "#{sign(x_t-mean) != sign(x_{t+1}-mean)}/(L-1), sign(0) = +"},
    {"succ_diff_mean", "volatility", "mean(|x_{t+1} - x_t|)"},
    {"succ_diff_std", "volatility", "population std(|x_{t+1} - x_t|)"},
    {"range_ratio", "volatility", "(max - min)/(|median| + eps)"},
}};

void require_length(std::span<const double> window) {
  if (window.size() < 4) {
    throw DataError("statistical features need a window of at least 4 values, got " +
                    std::to_string(window.size()));
  }
}

double mean_of_population_stds(std::span<const double> window, std::size_t k) {
  const std::size_t width = std::min(k, window.size());
  const std::size_t count = window.size() - width + 1;
  double total = 0.0;
  for (std::size_t start = 0; start < count; ++start) {
    total += numeric::population_std(window.subspan(start, width));
  }
  return total / static_cast<double>(count);
}

}  // namespace

const std::array<FeatureSpec, kStatFeatureCount>& feature_manifest() { return kManifest; }

nlohmann::ordered_json manifest_json() {
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < kManifest.size(); ++i) {
    features.push_back({{"index", i},
                        {"name", kManifest[i].name},
                        {"group", kManifest[i].group},
                        {"formula", kManifest[i].formula}});
  }
  return {{"epsilon", kEpsilon},
          {"drawdown", "absolute (running max minus value)"},
          {"rolling_std_aggregation", "mean over complete sub-windows"},
          {"kurtosis", "excess (Fisher)"},
          {"features", std::move(features)}};
}

BasicStats basic_stats(std::span<const double> window) {
  require_length(window);
  std::vector<double> sorted(window.begin(), window.end());
  std::sort(sorted.begin(), sorted.end());

  BasicStats s;
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = numeric::percentile_sorted(sorted, 0.50);
  s.p25 = numeric::percentile_sorted(sorted, 0.25);
  s.p75 = numeric::percentile_sorted(sorted, 0.75);
  s.p95 = numeric::percentile_sorted(sorted, 0.95);
  s.iqr = s.p75 - s.p25;
  s.mean = numeric::mean(window);
  if (s.min == s.max) return s;  // degenerate: all dispersion and shape terms 0

  const auto n = static_cast<double>(window.size());
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (const double x : window) {
    const double d = x - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2;
  s.std = std::sqrt(m2);
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis_excess = m4 / (m2 * m2) - 3.0;
  }
  return s;
}

TrendFeatures trend_features(std::span<const double> window) {
  require_length(window);
  const std::size_t n = window.size();
  const double t_mean = static_cast<double>(n - 1) / 2.0;
  const double x_mean = numeric::mean(window);

  double s_tt = 0.0, s_tx = 0.0, ss_tot = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - t_mean;
    const double dx = window[t] - x_mean;
    s_tt += dt * dt;
    s_tx += dt * dx;
    ss_tot += dx * dx;
  }
  const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
  const bool flat = *lo == *hi;

  TrendFeatures f;
  f.slope = flat ? 0.0 : s_tx / s_tt;
  f.intercept = x_mean - f.slope * t_mean;
  if (!flat && ss_tot > 0.0) {
    double ss_res = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double r = window[t] - (f.intercept + f.slope * static_cast<double>(t));
      ss_res += r * r;
    }
    f.r_squared = std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
  }

  const std::size_t k = std::min<std::size_t>(15, n / 2);
  const double past = numeric::mean(window.first(k));
  const double recent = numeric::mean(window.last(k));
  f.recent_past_ratio = recent / numeric::guard_denominator(past, kEpsilon);

  std::size_t rising = 0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (window[t + 1] - window[t] > 0.0) ++rising;
  }
  f.monotonicity = static_cast<double>(rising) / static_cast<double>(n - 1);
  return f;
}

VolatilityFeatures volatility_features(std::span<const double> window) {
  require_length(window);
  const std::size_t n = window.size();
  VolatilityFeatures v;
  v.rolling_std_7 = mean_of_population_stds(window, 7);
  v.rolling_std_14 = mean_of_population_stds(window, 14);
  v.rolling_std_30 = mean_of_population_stds(window, 30);

  const double mu = numeric::mean(window);
  const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
  const double sigma = (*lo == *hi) ? 0.0 : numeric::population_std(window);
  v.coef_variation = sigma / (std::abs(mu) + kEpsilon);

  double runmax = window[0];
  double dd_sum = 0.0;
  std::size_t run = 0, longest = 0;
  for (const double x : window) {
    runmax = std::max(runmax, x);
    const double dd = runmax - x;
    v.max_drawdown = std::max(v.max_drawdown, dd);
    dd_sum += dd;
    run = dd > 0.0 ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  v.avg_drawdown = dd_sum / static_cast<double>(n);
  v.drawdown_duration = static_cast<double>(longest);

  std::size_t crossings = 0;
  bool prev_positive = window[0] - mu >= 0.0;
  std::vector<double> abs_diff(n - 1);
  for (std::size_t t = 1; t < n; ++t) {
    const bool positive = window[t] - mu >= 0.0;
    if (positive != prev_positive) ++crossings;
    prev_positive = positive;
    abs_diff[t - 1] = std::abs(window[t] - window[t - 1]);
  }
  v.zero_crossing_rate = static_cast<double>(crossings) / static_cast<double>(n - 1);
  v.succ_diff_mean = numeric::mean(abs_diff);
  v.succ_diff_std = numeric::population_std(abs_diff);

  const double median = numeric::percentile(window, 0.5);
  v.range_ratio = (*hi - *lo) / (std::abs(median) + kEpsilon);
  return v;
}

StatFeatureVector extract_stat_features(std::span<const double> window) {
  const BasicStats b = basic_stats(window);
  const TrendFeatures t = trend_features(window);
  const VolatilityFeatures v = volatility_features(window);
  return {b.mean,          b.median,          b.std,
          b.variance,      b.iqr,             b.p25,
          b.p75,           b.p95,             b.skewness,
          b.kurtosis_excess, b.min,           b.max,
          t.slope,         t.intercept,       t.recent_past_ratio,
          t.monotonicity,  t.r_squared,       v.rolling_std_7,
          v.rolling_std_14, v.rolling_std_30, v.coef_variation,
          v.max_drawdown,  v.avg_drawdown,    v.drawdown_duration,
          v.zero_crossing_rate, v.succ_diff_mean, v.succ_diff_std,
          v.range_ratio};
}

std::array<double, 2> percentile_ratios(std::span<const double> window) {
  require_length(window);
  std::vector<double> sorted(window.begin(), window.end());
  std::sort(sorted.begin(), sorted.end());
  const double p5 = numeric::percentile_sorted(sorted, 0.05);
  const double p25 = numeric::percentile_sorted(sorted, 0.25);
  const double p75 = numeric::percentile_sorted(sorted, 0.75);
  const double p95 = numeric::percentile_sorted(sorted, 0.95);
  return {p95 / numeric::guard_denominator(p5, kEpsilon), p75 / numeric::guard_denominator(p25, kEpsilon)};
}

FeatureStandardizer::FeatureStandardizer(std::vector<double> means, std::vector<double> stds)
    : means_(std::move(means)), stds_(std::move(stds)) {
  if (means_.size() != kStatFeatureCount || stds_.size() != kStatFeatureCount) {
    throw DataError("standardizer must carry exactly 28 means and stds");
  }
}

FeatureStandardizer FeatureStandardizer::fit(std::span<const StatFeatureVector> training_rows) {
  if (training_rows.size() < 2) throw DataError("standardizer fit needs at least 2 training rows");
  std::vector<double> means(kStatFeatureCount), stds(kStatFeatureCount);
  std::vector<double> column(training_rows.size());
  for (std::size_t j = 0; j < kStatFeatureCount; ++j) {
    for (std::size_t i = 0; i < training_rows.size(); ++i) column[i] = training_rows[i][j];
    const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
    const bool constant = *lo == *hi;
    means[j] = constant ? column.front() : numeric::mean(column);
    stds[j] = constant ? 0.0 : numeric::population_std(column);
  }
  return {std::move(means), std::move(stds)};
}

StatFeatureVector FeatureStandardizer::apply(const StatFeatureVector& raw) const {
  if (!fitted()) throw DataError("standardizer used before fit");
  StatFeatureVector out{};
  for (std::size_t j = 0; j < kStatFeatureCount; ++j) {
    out[j] = (raw[j] - means_[j]) / std::max(stds_[j], kEpsilon);
  }
  return out;
}

nlohmann::ordered_json FeatureStandardizer::to_json() const {
  return {{"mean", means_}, {"std", stds_}};
}

FeatureStandardizer FeatureStandardizer::from_json(const nlohmann::json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

}  // namespace hybridsentry::statfeatures
