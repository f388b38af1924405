#include "hybridsentry/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>
#include <span>
#include <spdlog/spdlog.h>

#include "hybridsentry/numeric.hpp"

namespace hybridsentry::synth {

namespace {

constexpr int kPlacementAttempts = 20000;

struct ChannelPlan {
  std::string equipment_id;
  std::string channel_id;
  double baseline = 0.0;
  double band = 0.0;
  double annual_phase = 0.0;
  double weekly_phase = 0.0;
  std::vector<FleetEvent> events;
  std::vector<std::uint8_t> positive;  // per window end index
  std::vector<std::pair<int, int>> reserved;  // inclusive day spans
};

struct DayEffect {
  double volatility = 1.0;
  double drift = 0.0;
  int event_direction = 0;
  double event_level = 0.0;
};

bool overlaps(const std::vector<std::pair<int, int>>& spans, int lo, int hi) {
  return std::any_of(spans.begin(), spans.end(), [&](const auto& s) { return lo <= s.second && s.first <= hi; });
}

}  // namespace

void FleetSpec::validate() const {
  if (n_equipment < 1) throw ConfigError("n_equipment must be >= 1");
  if (!(channels_per_equipment >= 1.0)) throw ConfigError("channels_per_equipment must be >= 1");
  if (days < lookback + max_horizon) throw ConfigError("days must cover at least one window and its horizon");
  if (!(anomaly_rate_target > 0.0 && anomaly_rate_target < 0.5)) {
    throw ConfigError("anomaly_rate_target must be in (0, 0.5)");
  }
  if (precursor.lead_time < 1 || precursor.lead_time > 90) throw ConfigError("lead_time must be in [1, 90]");
  if (!(precursor.volatility_ramp >= 1.0)) throw ConfigError("volatility_ramp must be >= 1");
  if (!(precursor.onset_share >= 0.0 && precursor.onset_share <= 1.0)) {
    throw ConfigError("onset_share must be in [0, 1]");
  }
  if (!(sudden_onset_fraction >= 0.0 && sudden_onset_fraction <= 1.0)) {
    throw ConfigError("sudden_onset_fraction must be in [0, 1]");
  }
  if (min_event_days < 1 || max_event_days < min_event_days) throw ConfigError("event day bounds are inconsistent");
  if (!(event_magnitude_min > 0.0 && event_magnitude_max >= event_magnitude_min)) {
    throw ConfigError("event magnitude bounds are inconsistent");
  }
  if (!(noise_std >= 0.0 && seasonal_amplitude >= 0.0 && weekly_amplitude >= 0.0)) {
    throw ConfigError("signal amplitudes must be >= 0");
  }
  if (!(gap_rate >= 0.0 && gap_rate < 1.0) || max_gap_days < 1) throw ConfigError("gap settings are invalid");
  if (event_cooldown < 0) throw ConfigError("event_cooldown must be >= 0");
  if (!(quiet_fraction > 0.0 && quiet_fraction < 1.0)) throw ConfigError("quiet_fraction must be in (0, 1)");
  if (!(limit_share > 0.0 && limit_share < 0.5)) throw ConfigError("limit_share must be in (0, 0.5)");
  if (lookback < 1 || max_horizon < 1) throw ConfigError("window geometry must be positive");
}

nlohmann::ordered_json FleetSpec::to_json() const {
  nlohmann::ordered_json j;
  j["n_equipment"] = n_equipment;
  j["channels_per_equipment"] = channels_per_equipment;
  j["days"] = days;
  j["start_date"] = start_date.to_string();
  j["seasonal_amplitude"] = seasonal_amplitude;
  j["weekly_amplitude"] = weekly_amplitude;
  j["noise_std"] = noise_std;
  j["anomaly_rate_target"] = anomaly_rate_target;
  j["precursor"] = {{"volatility_ramp", precursor.volatility_ramp},
                    {"drift_slope", precursor.drift_slope},
                    {"onset_share", precursor.onset_share},
                    {"lead_time", precursor.lead_time}};
  j["sudden_onset_fraction"] = sudden_onset_fraction;
  j["min_event_days"] = min_event_days;
  j["max_event_days"] = max_event_days;
  j["event_magnitude_min"] = event_magnitude_min;
  j["event_magnitude_max"] = event_magnitude_max;
  j["event_cooldown"] = event_cooldown;
  j["gap_rate"] = gap_rate;
  j["max_gap_days"] = max_gap_days;
  j["lookback"] = lookback;
  j["max_horizon"] = max_horizon;
  j["quiet_fraction"] = quiet_fraction;
  j["limit_share"] = limit_share;
  j["seed"] = seed;
  return j;
}

FleetSpec FleetSpec::from_json(const nlohmann::json& j) {
  FleetSpec s;
  try {
    s.n_equipment = j.value("n_equipment", s.n_equipment);
    s.channels_per_equipment = j.value("channels_per_equipment", s.channels_per_equipment);
    s.days = j.value("days", s.days);
    if (j.contains("start_date")) s.start_date = Date::parse(j.at("start_date").get<std::string>());
    s.seasonal_amplitude = j.value("seasonal_amplitude", s.seasonal_amplitude);
    s.weekly_amplitude = j.value("weekly_amplitude", s.weekly_amplitude);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.anomaly_rate_target = j.value("anomaly_rate_target", s.anomaly_rate_target);
    if (j.contains("precursor")) {
      const auto& p = j.at("precursor");
      s.precursor.volatility_ramp = p.value("volatility_ramp", s.precursor.volatility_ramp);
      s.precursor.drift_slope = p.value("drift_slope", s.precursor.drift_slope);
      s.precursor.onset_share = p.value("onset_share", s.precursor.onset_share);
      s.precursor.lead_time = p.value("lead_time", s.precursor.lead_time);
    }
    s.sudden_onset_fraction = j.value("sudden_onset_fraction", s.sudden_onset_fraction);
    s.min_event_days = j.value("min_event_days", s.min_event_days);
    s.max_event_days = j.value("max_event_days", s.max_event_days);
    s.event_magnitude_min = j.value("event_magnitude_min", s.event_magnitude_min);
    s.event_magnitude_max = j.value("event_magnitude_max", s.event_magnitude_max);
    s.event_cooldown = j.value("event_cooldown", s.event_cooldown);
    s.gap_rate = j.value("gap_rate", s.gap_rate);
    s.max_gap_days = j.value("max_gap_days", s.max_gap_days);
    s.lookback = j.value("lookback", s.lookback);
    s.max_horizon = j.value("max_horizon", s.max_horizon);
    s.quiet_fraction = j.value("quiet_fraction", s.quiet_fraction);
    s.limit_share = j.value("limit_share", s.limit_share);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fleet spec: ") + e.what());
  }
  s.validate();
  return s;
}

Fleet generate_fleet(const FleetSpec& spec) {
  spec.validate();
  Rng layout(derive_seed(spec.seed, "fleet-layout"));

  // Channel counts: floor(mean) each, plus one extra for a random subset so
  // the fleet-wide mean matches.
  const int base_channels = static_cast<int>(std::floor(spec.channels_per_equipment));
  const auto extra_total = static_cast<std::size_t>(
      std::llround((spec.channels_per_equipment - base_channels) * static_cast<double>(spec.n_equipment)));
  std::vector<std::size_t> order(static_cast<std::size_t>(spec.n_equipment));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[layout.below(i)]);
  std::vector<int> channel_count(order.size(), base_channels);
  for (std::size_t k = 0; k < extra_total && k < order.size(); ++k) ++channel_count[order[k]];

  const int n_windows = spec.days - spec.lookback - spec.max_horizon + 1;
  std::vector<ChannelPlan> plans;
  for (int e = 0; e < spec.n_equipment; ++e) {
    for (int c = 0; c < channel_count[static_cast<std::size_t>(e)]; ++c) {
      ChannelPlan p;
      p.equipment_id = fmt::format("EQ{:03}", e + 1);
      p.channel_id = fmt::format("CH{:02}", c + 1);
      p.baseline = layout.uniform(10.0, 100.0);
      p.band = p.baseline * layout.uniform(0.05, 0.2);
      p.annual_phase = layout.uniform(0.0, 365.25);
      p.weekly_phase = static_cast<double>(layout.below(7));
      p.positive.assign(static_cast<std::size_t>(n_windows), 0);
      plans.push_back(std::move(p));
    }
  }

  // Event placement: random (channel, start, length) draws, accepted when the
  // event and its precursor stay clear of the quiet prefix and of other
  // events, until the windowed positive share reaches the target.
  Fleet fleet;
  fleet.windows = plans.size() * static_cast<std::size_t>(n_windows);
  const auto target = static_cast<std::size_t>(std::ceil(spec.anomaly_rate_target * static_cast<double>(fleet.windows)));
  const int lead = spec.precursor.lead_time;
  const int quiet_days = std::max(2, static_cast<int>(std::ceil(spec.quiet_fraction * spec.days)));
  const int first_start = quiet_days + lead + 1;
  const int first_end_index = spec.lookback - 1;
  Rng placer(derive_seed(spec.seed, "fleet-events"));
  int attempts = 0;
  while (fleet.positive_windows < target && attempts < kPlacementAttempts) {
    ++attempts;
    auto& plan = plans[placer.below(plans.size())];
    const int length = spec.min_event_days +
                       static_cast<int>(placer.below(static_cast<std::uint64_t>(spec.max_event_days - spec.min_event_days + 1)));
    const int last_start = spec.days - length;
    if (last_start < first_start) continue;
    const int start = first_start + static_cast<int>(placer.below(static_cast<std::uint64_t>(last_start - first_start + 1)));
    const bool sudden = placer.uniform() < spec.sudden_onset_fraction;
    const int direction = placer.uniform() < 0.5 ? -1 : 1;
    const int span_lo = start - lead - 1;
    const int span_hi = start + length - 1 + spec.event_cooldown;
    if (overlaps(plan.reserved, span_lo, span_hi)) continue;

    plan.reserved.emplace_back(span_lo, span_hi);
    FleetEvent ev;
    ev.equipment_id = plan.equipment_id;
    ev.channel_id = plan.channel_id;
    ev.start_date = spec.start_date + start;
    ev.end_date = spec.start_date + (start + length - 1);
    ev.direction = direction;
    ev.sudden_onset = sudden;
    plan.events.push_back(ev);

    // Window ending at day t is positive iff an event day lies in (t, t + H].
    const int t_lo = std::max(first_end_index, start - spec.max_horizon);
    const int t_hi = std::min(first_end_index + n_windows - 1, start + length - 2);
    for (int t = t_lo; t <= t_hi; ++t) {
      auto& flag = plan.positive[static_cast<std::size_t>(t - first_end_index)];
      if (flag == 0) {
        flag = 1;
        ++fleet.positive_windows;
      }
    }
  }
  if (fleet.positive_windows < target) {
    spdlog::warn("synth: reached {:.4f} anomalous windows, short of the {:.4f} target", fleet.realized_rate(),
                 spec.anomaly_rate_target);
  }

  fleet.series.resize(plans.size());
  parallel_for(plans.size(), [&](std::size_t k) {
    const ChannelPlan& plan = plans[k];
    Rng rng(derive_seed(spec.seed, "signal:" + plan.equipment_id + ":" + plan.channel_id));
    const auto n = static_cast<std::size_t>(spec.days);

    std::vector<DayEffect> effects(n);
    std::vector<std::uint8_t> protected_day(n, 0);
    for (const auto& ev : plan.events) {
      const auto s = static_cast<int>(ev.start_date - spec.start_date);
      const auto e = static_cast<int>(ev.end_date - spec.start_date);
      const double level = rng.uniform(spec.event_magnitude_min, spec.event_magnitude_max);
      for (int d = s; d <= e; ++d) {
        effects[static_cast<std::size_t>(d)].event_direction = ev.direction;
        effects[static_cast<std::size_t>(d)].event_level = level;
      }
      for (int d = std::max(0, s - 5); d <= std::min(spec.days - 1, e + 5); ++d) protected_day[static_cast<std::size_t>(d)] = 1;
      if (ev.sudden_onset) continue;
      for (int step = 1; step <= lead; ++step) {
        const int d = s - lead - 1 + step;
        if (d < 0) continue;
        const double progress = static_cast<double>(step) / lead;
        const double share = spec.precursor.onset_share + (1.0 - spec.precursor.onset_share) * progress;
        auto& fx = effects[static_cast<std::size_t>(d)];
        fx.volatility = 1.0 + (spec.precursor.volatility_ramp - 1.0) * share;
        fx.drift = ev.direction * spec.precursor.drift_slope * step;
      }
    }

    dataset::ChannelSeries& out = fleet.series[k];
    out.equipment_id = plan.equipment_id;
    out.channel_id = plan.channel_id;
    out.dates.resize(n);
    out.values.resize(n);
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    std::vector<double> x(n);
    for (std::size_t d = 0; d < n; ++d) {
      out.dates[d] = spec.start_date + static_cast<std::int64_t>(d);
      const auto day = static_cast<double>(d);
      const DayEffect& fx = effects[d];
      x[d] = spec.seasonal_amplitude * std::sin(kTwoPi * (day + plan.annual_phase) / 365.25) +
             spec.weekly_amplitude * std::sin(kTwoPi * (day + plan.weekly_phase) / 7.0) +
             rng.normal(0.0, spec.noise_std * fx.volatility) + fx.drift;
    }

    // Regulation limits hold `limit_share` of the quiet prefix on each side,
    // so the normal range sits on the limits and only event days exit it.
    const std::span<const double> prefix(x.data(), std::min(n, static_cast<std::size_t>(quiet_days)));
    const double lo = numeric::percentile(prefix, spec.limit_share);
    const double hi = std::max(numeric::percentile(prefix, 1.0 - spec.limit_share), lo + 1e-6);
    const double half = 0.5 * (hi - lo);
    for (std::size_t d = 0; d < n; ++d) {
      const DayEffect& fx = effects[d];
      double v = std::clamp(x[d], lo, hi);
      if (fx.event_direction != 0) {
        const double edge = fx.event_direction > 0 ? hi : lo;
        v = edge + fx.event_direction * half * fx.event_level * (1.0 + 0.2 * std::abs(rng.normal()));
      }
      out.values[d] = plan.baseline + plan.band * v;
    }

    // Missing-value runs, kept away from events.
    std::size_t d = 0;
    while (d < n) {
      if (protected_day[d] == 0 && rng.uniform() < spec.gap_rate) {
        const auto run = 1 + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(spec.max_gap_days)));
        for (std::size_t g = d; g < std::min(n, d + run) && protected_day[g] == 0; ++g) {
          out.values[g] = std::numeric_limits<double>::quiet_NaN();
        }
        d += run;
      } else {
        ++d;
      }
    }
  });

  for (auto& plan : plans) {
    for (auto& ev : plan.events) fleet.events.push_back(std::move(ev));
  }
  std::sort(fleet.events.begin(), fleet.events.end(), [](const FleetEvent& a, const FleetEvent& b) {
    return std::tie(a.equipment_id, a.channel_id, a.start_date) < std::tie(b.equipment_id, b.channel_id, b.start_date);
  });
  return fleet;
}

void write_events_jsonl(std::ostream& out, std::span<const FleetEvent> events) {
  for (const auto& ev : events) {
    nlohmann::ordered_json j;
    j["equipment_id"] = ev.equipment_id;
    j["channel_id"] = ev.channel_id;
    j["start_date"] = ev.start_date.to_string();
    j["end_date"] = ev.end_date.to_string();
    out << j.dump() << '\n';
  }
}

}  // namespace hybridsentry::synth
