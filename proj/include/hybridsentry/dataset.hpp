#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybridsentry/common.hpp"

namespace hybridsentry::dataset {

/// One equipment/check-item daily series. Gaps are stored as quiet NaN until
/// impute_gaps has run.
struct ChannelSeries {
  std::string equipment_id;
  std::string channel_id;
  std::vector<Date> dates;
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] bool has_gaps() const;
  [[nodiscard]] std::string key() const { return equipment_id + ":" + channel_id; }
  /// Throws DataError unless dates are strictly increasing and match values.
  void validate() const;
};

struct NormalRange {
  double lower = 0.0;
  double upper = 0.0;
};

using LabelSeries = std::vector<std::uint8_t>;

struct SampleWindow {
  std::string sample_id;
  Date end_date;
  std::vector<double> values;
  /// Horizon in days -> y_{t,h}.
  std::map<int, int> horizon_labels;

  [[nodiscard]] int label(int horizon) const;
};

struct StandardizerStats {
  double mean = 0.0;
  double std = 0.0;
};

struct WindowConfig {
  int lookback = 90;
  int stride = 1;
  std::vector<int> horizons{30, 60, 90};

  void validate() const;
  [[nodiscard]] int max_horizon() const;
};

struct PreprocessConfig {
  int max_ffill_days = 3;
  double clip_k = 4.0;
  /// Leading fraction of the training span used as the normal period.
  double normal_fraction = 0.2;
};

// --- preprocessing -------------------------------------------------------

/// Gaps of at most max_ffill_days are forward-filled, longer interior gaps
/// are linearly interpolated, leading gaps are back-filled and trailing gaps
/// forward-filled.
ChannelSeries impute_gaps(const ChannelSeries& series, int max_ffill_days = 3);

/// Clamps to [mu - k*sigma, mu + k*sigma] with the series' own population moments.
ChannelSeries clip_outliers(const ChannelSeries& series, double k = 4.0);

StandardizerStats fit_series_standardizer(std::span<const double> training_values);

/// (v - mu) / max(sigma, 1e-8)
ChannelSeries zscore_normalize(const ChannelSeries& series, const StandardizerStats& stats);

// --- labeling ------------------------------------------------------------

/// P5/P95 with linear interpolation at rank p*(n-1). Requires >= 2 values.
NormalRange compute_normal_range(std::span<const double> normal_period_values);

/// y_t = 1 iff x_t < lower or x_t > upper.
LabelSeries label_series(const ChannelSeries& series, const NormalRange& range);

/// max(y_{t+1..t+h}); nullopt when the labels do not reach t + h.
std::optional<int> horizon_label(const LabelSeries& labels, std::size_t t, int horizon);

std::vector<SampleWindow> make_windows(const ChannelSeries& series, const LabelSeries& labels,
                                       const WindowConfig& config = {});

/// train = end_date < cutoff, order preserved.
std::pair<std::vector<SampleWindow>, std::vector<SampleWindow>> temporal_split(
    std::span<const SampleWindow> samples, Date cutoff);

// --- channel pipeline ----------------------------------------------------

struct PreparedChannel {
  ChannelSeries normalized;
  LabelSeries labels;
  StandardizerStats stats;
  NormalRange range;
};

/// impute -> clip -> normal range / labels on the clipped series -> z-score
/// with statistics from days strictly before `cutoff`.
PreparedChannel prepare_channel(const ChannelSeries& raw, Date cutoff, const PreprocessConfig& config);

// --- I/O -----------------------------------------------------------------

/// Reads `equipment_id,channel_id,date,value`. Each channel is reindexed onto
/// a contiguous daily calendar; missing days and empty values become gaps.
std::vector<ChannelSeries> read_raw_csv(std::istream& in);
std::vector<ChannelSeries> read_raw_csv(const std::filesystem::path& path);
void write_raw_csv(std::ostream& out, std::span<const ChannelSeries> series);

void write_windows_jsonl(std::ostream& out, std::span<const SampleWindow> windows);
std::vector<SampleWindow> read_windows_jsonl(std::istream& in);
std::vector<SampleWindow> read_windows_jsonl(const std::filesystem::path& path);

std::string horizon_key(int horizon);

}  // namespace hybridsentry::dataset
