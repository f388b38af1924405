#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hybridsentry/common.hpp"
#include "hybridsentry/dataset.hpp"
#include "json.hpp"

namespace hybridsentry::synth {

/// Degradation signature injected before each non-sudden event. Magnitudes are
/// in units of the channel's band.
struct PrecursorConfig {
  /// Noise multiplier reached on the day before the event.
  double volatility_ramp = 20.0;
  /// Drift added per precursor day, towards the side the event exits.
  double drift_slope = 0.002;
  /// Share of the final volatility increase present from the first precursor day.
  double onset_share = 1.0;
  int lead_time = 90;
};

/// Each channel is baseline + band * clamp(annual + weekly + noise + drift, lo, hi)
/// outside events. The clamp stands in for regulation limits placed so that
/// `limit_share` of the quiet prefix sits on each; the normal period's P5/P95
/// then equal them and only event days are labeled.
struct FleetSpec {
  int n_equipment = 16;
  double channels_per_equipment = 3.6;
  int days = 730;
  Date start_date = Date::parse("2022-01-01");
  double seasonal_amplitude = 0.02;
  double weekly_amplitude = 0.8;
  double noise_std = 0.1;
  /// Share of stride-1 windows with an event within the longest horizon.
  double anomaly_rate_target = 0.246;
  PrecursorConfig precursor;
  double sudden_onset_fraction = 0.0;
  int min_event_days = 2;
  int max_event_days = 5;
  double event_magnitude_min = 0.5;
  double event_magnitude_max = 1.5;
  /// Quiet days after an event before the next precursor may start.
  int event_cooldown = 30;
  /// Per-day probability of starting a run of missing values.
  double gap_rate = 0.002;
  int max_gap_days = 6;
  /// Window geometry the anomaly rate is measured against.
  int lookback = 90;
  int max_horizon = 90;
  /// Leading share of the days kept free of events and precursors.
  double quiet_fraction = 0.2;
  double limit_share = 0.125;
  std::uint64_t seed = 42;

  void validate() const;
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static FleetSpec from_json(const nlohmann::json& j);
};

struct FleetEvent {
  std::string equipment_id;
  std::string channel_id;
  Date start_date;
  Date end_date;  // inclusive
  int direction = 1;
  bool sudden_onset = false;
};

struct Fleet {
  std::vector<dataset::ChannelSeries> series;
  std::vector<FleetEvent> events;
  std::size_t windows = 0;
  std::size_t positive_windows = 0;

  [[nodiscard]] double realized_rate() const {
    return windows == 0 ? 0.0 : static_cast<double>(positive_windows) / static_cast<double>(windows);
  }
};

Fleet generate_fleet(const FleetSpec& spec);

/// `{"equipment_id","channel_id","start_date","end_date"}` per line.
void write_events_jsonl(std::ostream& out, std::span<const FleetEvent> events);

}  // namespace hybridsentry::synth
