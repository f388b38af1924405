#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hybridsentry::statfeatures {

inline constexpr std::size_t kBasicCount = 12;
inline constexpr std::size_t kTrendCount = 5;
inline constexpr std::size_t kVolatilityCount = 11;
inline constexpr std::size_t kStatFeatureCount = kBasicCount + kTrendCount + kVolatilityCount;

/// Distributional summary of one window (population moments, linear-interpolated percentiles).
struct BasicStats {
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
  double variance = 0.0;
  double iqr = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double p95 = 0.0;
  double skewness = 0.0;
  double kurtosis_excess = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct TrendFeatures {
  double slope = 0.0;
  double intercept = 0.0;
  double recent_past_ratio = 0.0;
  double monotonicity = 0.0;
  double r_squared = 0.0;
};

struct VolatilityFeatures {
  double rolling_std_7 = 0.0;
  double rolling_std_14 = 0.0;
  double rolling_std_30 = 0.0;
  double coef_variation = 0.0;
  double max_drawdown = 0.0;
  double avg_drawdown = 0.0;
  double drawdown_duration = 0.0;
  double zero_crossing_rate = 0.0;
  double succ_diff_mean = 0.0;
  double succ_diff_std = 0.0;
  double range_ratio = 0.0;
};

using StatFeatureVector = std::array<double, kStatFeatureCount>;

struct FeatureSpec {
  std::string_view name;
  std::string_view group;
  std::string_view formula;
};

/// Fixed index -> name mapping for the 28 features.
const std::array<FeatureSpec, kStatFeatureCount>& feature_manifest();
nlohmann::ordered_json manifest_json();

/// Requires at least 4 values.
BasicStats basic_stats(std::span<const double> window);
TrendFeatures trend_features(std::span<const double> window);
VolatilityFeatures volatility_features(std::span<const double> window);

/// Concatenates basic, trend and volatility groups in manifest order (unstandardized).
StatFeatureVector extract_stat_features(std::span<const double> window);

/// The two percentile-ratio features (P95/P5, P75/P25) left out of the
/// canonical 28. Kept for comparison runs.
std::array<double, 2> percentile_ratios(std::span<const double> window);

/// Per-feature z-scoring with training-set mean and population std.
class FeatureStandardizer {
 public:
  FeatureStandardizer() = default;
  FeatureStandardizer(std::vector<double> means, std::vector<double> stds);

  /// Requires at least 2 rows. Returns a frozen standardizer.
  static FeatureStandardizer fit(std::span<const StatFeatureVector> training_rows);

  [[nodiscard]] StatFeatureVector apply(const StatFeatureVector& raw) const;
  [[nodiscard]] bool fitted() const { return !means_.empty(); }
  [[nodiscard]] const std::vector<double>& means() const { return means_; }
  [[nodiscard]] const std::vector<double>& stds() const { return stds_; }

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static FeatureStandardizer from_json(const nlohmann::json& j);

 private:
  std::vector<double> means_;
  std::vector<double> stds_;
};

}  // namespace hybridsentry::statfeatures
