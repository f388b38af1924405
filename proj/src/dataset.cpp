#include "hybridsentry/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>
#include "json.hpp"
#include <spdlog/spdlog.h>

#include "hybridsentry/numeric.hpp"

namespace hybridsentry::dataset {

namespace {

constexpr double kGap = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view text, std::size_t line_no) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw DataError(fmt::format("line {}: invalid value '{}'", line_no, text));
  }
  return value;
}

}  // namespace

bool ChannelSeries::has_gaps() const {
  return std::any_of(values.begin(), values.end(), [](double v) { return std::isnan(v); });
}

void ChannelSeries::validate() const {
  if (dates.size() != values.size()) {
    throw DataError(key() + ": dates and values differ in length");
  }
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (!(dates[i - 1] < dates[i])) throw DataError(key() + ": dates not strictly increasing");
  }
}

int SampleWindow::label(int horizon) const {
  const auto it = horizon_labels.find(horizon);
  if (it == horizon_labels.end()) {
    throw DataError(sample_id + ": no label for horizon " + std::to_string(horizon));
  }
  return it->second;
}

void WindowConfig::validate() const {
  if (lookback < 4) throw ConfigError("window lookback must be >= 4");
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  if (horizons.empty()) throw ConfigError("at least one horizon is required");
  for (const int h : horizons) {
    if (h < 1) throw ConfigError("horizons must be >= 1 day");
  }
}

int WindowConfig::max_horizon() const {
  return horizons.empty() ? 0 : *std::max_element(horizons.begin(), horizons.end());
}

ChannelSeries impute_gaps(const ChannelSeries& series, int max_ffill_days) {
  ChannelSeries out = series;
  auto& v = out.values;
  const auto first = std::find_if(v.begin(), v.end(), [](double x) { return !std::isnan(x); });
  if (first == v.end()) {
    throw DataError(series.key() + ": series has no observed values");
  }
  const auto first_idx = static_cast<std::size_t>(first - v.begin());
  for (std::size_t i = 0; i < first_idx; ++i) v[i] = v[first_idx];

  std::size_t i = first_idx + 1;
  while (i < v.size()) {
    if (!std::isnan(v[i])) {
      ++i;
      continue;
    }
    const std::size_t run_start = i;
    while (i < v.size() && std::isnan(v[i])) ++i;
    const std::size_t run_len = i - run_start;
    const double before = v[run_start - 1];
    const bool interior = i < v.size();
    if (run_len <= static_cast<std::size_t>(max_ffill_days) || !interior) {
      std::fill(v.begin() + static_cast<std::ptrdiff_t>(run_start), v.begin() + static_cast<std::ptrdiff_t>(i),
                before);
    } else {
      const double after = v[i];
      const double span = static_cast<double>(run_len + 1);
      for (std::size_t k = 0; k < run_len; ++k) {
        v[run_start + k] = before + (after - before) * static_cast<double>(k + 1) / span;
      }
    }
  }
  return out;
}

ChannelSeries clip_outliers(const ChannelSeries& series, double k) {
  if (series.values.empty()) throw DataError(series.key() + ": cannot clip an empty series");
  std::vector<double> observed;
  observed.reserve(series.size());
  for (const double x : series.values) {
    if (!std::isnan(x)) observed.push_back(x);
  }
  const double mu = numeric::mean(observed);
  const double sigma = numeric::population_std(observed);
  const double lo = mu - k * sigma;
  const double hi = mu + k * sigma;
  ChannelSeries out = series;
  for (double& x : out.values) {
    if (!std::isnan(x)) x = std::min(std::max(x, lo), hi);
  }
  return out;
}

StandardizerStats fit_series_standardizer(std::span<const double> training_values) {
  if (training_values.empty()) throw DataError("standardizer needs at least one training value");
  return {numeric::mean(training_values), numeric::population_std(training_values)};
}

ChannelSeries zscore_normalize(const ChannelSeries& series, const StandardizerStats& stats) {
  ChannelSeries out = series;
  const double denom = std::max(stats.std, kEpsilon);
  for (double& x : out.values) x = (x - stats.mean) / denom;
  return out;
}

NormalRange compute_normal_range(std::span<const double> normal_period_values) {
  if (normal_period_values.size() < 2) {
    throw DataError("normal range needs at least 2 values");
  }
  std::vector<double> sorted(normal_period_values.begin(), normal_period_values.end());
  std::sort(sorted.begin(), sorted.end());
  return {numeric::percentile_sorted(sorted, 0.05), numeric::percentile_sorted(sorted, 0.95)};
}

LabelSeries label_series(const ChannelSeries& series, const NormalRange& range) {
  LabelSeries labels(series.size(), 0);
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double x = series.values[t];
    labels[t] = (x < range.lower || x > range.upper) ? 1 : 0;
  }
  return labels;
}

std::optional<int> horizon_label(const LabelSeries& labels, std::size_t t, int horizon) {
  if (horizon < 1 || t + static_cast<std::size_t>(horizon) >= labels.size()) return std::nullopt;
  for (std::size_t k = t + 1; k <= t + static_cast<std::size_t>(horizon); ++k) {
    if (labels[k] != 0) return 1;
  }
  return 0;
}

std::vector<SampleWindow> make_windows(const ChannelSeries& series, const LabelSeries& labels,
                                       const WindowConfig& config) {
  config.validate();
  if (labels.size() != series.size()) throw DataError(series.key() + ": label/series length mismatch");
  const auto lookback = static_cast<std::size_t>(config.lookback);
  const auto max_h = static_cast<std::size_t>(config.max_horizon());
  std::vector<SampleWindow> windows;
  if (series.size() < lookback + max_h) {
    spdlog::warn("{}: {} days is too short for lookback {} + horizon {}", series.key(), series.size(),
                 lookback, max_h);
    return windows;
  }
  for (std::size_t t = lookback - 1; t + max_h <= series.size() - 1; t += static_cast<std::size_t>(config.stride)) {
    SampleWindow w;
    w.end_date = series.dates[t];
    w.sample_id = series.key() + ":" + w.end_date.to_string();
    w.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(t + 1 - lookback),
                    series.values.begin() + static_cast<std::ptrdiff_t>(t + 1));
    for (const int h : config.horizons) w.horizon_labels[h] = *horizon_label(labels, t, h);
    windows.push_back(std::move(w));
  }
  return windows;
}

std::pair<std::vector<SampleWindow>, std::vector<SampleWindow>> temporal_split(
    std::span<const SampleWindow> samples, Date cutoff) {
  std::pair<std::vector<SampleWindow>, std::vector<SampleWindow>> out;
  for (const auto& s : samples) {
    (s.end_date < cutoff ? out.first : out.second).push_back(s);
  }
  return out;
}

PreparedChannel prepare_channel(const ChannelSeries& raw, Date cutoff, const PreprocessConfig& config) {
  raw.validate();
  const ChannelSeries clipped = clip_outliers(impute_gaps(raw, config.max_ffill_days), config.clip_k);

  const auto train_days = static_cast<std::size_t>(
      std::lower_bound(clipped.dates.begin(), clipped.dates.end(), cutoff) - clipped.dates.begin());
  if (train_days < 2) {
    throw DataError(raw.key() + ": fewer than 2 days before the cutoff " + cutoff.to_string());
  }
  const std::span<const double> training(clipped.values.data(), train_days);
  const auto normal_days = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config.normal_fraction * static_cast<double>(train_days))), 2,
      train_days);

  PreparedChannel prepared;
  prepared.range = compute_normal_range(training.first(normal_days));
  prepared.labels = label_series(clipped, prepared.range);
  prepared.stats = fit_series_standardizer(training);
  prepared.normalized = zscore_normalize(clipped, prepared.stats);
  return prepared;
}

std::vector<ChannelSeries> read_raw_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("raw CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "equipment_id,channel_id,date,value") {
    throw DataError("raw CSV header must be 'equipment_id,channel_id,date,value'");
  }

  struct Pending {
    std::string equipment_id, channel_id;
    std::vector<std::pair<Date, double>> rows;
  };
  std::vector<Pending> channels;
  std::unordered_map<std::string, std::size_t> index;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) throw DataError(fmt::format("line {}: expected 4 fields", line_no));
    if (fields[0].empty() || fields[1].empty()) {
      throw DataError(fmt::format("line {}: empty equipment or channel id", line_no));
    }
    Date date;
    try {
      date = Date::parse(fields[2]);
    } catch (const DataError& e) {
      throw DataError(fmt::format("line {}: {}", line_no, e.what()));
    }
    const double value = fields[3].empty() ? kGap : parse_double(fields[3], line_no);
    std::string key = std::string(fields[0]) + '\x1f' + std::string(fields[1]);
    auto [it, inserted] = index.try_emplace(std::move(key), channels.size());
    if (inserted) channels.push_back({std::string(fields[0]), std::string(fields[1]), {}});
    channels[it->second].rows.emplace_back(date, value);
  }

  std::vector<ChannelSeries> out;
  out.reserve(channels.size());
  for (auto& pending : channels) {
    auto& rows = pending.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    ChannelSeries series{pending.equipment_id, pending.channel_id, {}, {}};
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].first == rows[i - 1].first) {
        throw DataError(series.key() + ": duplicate date " + rows[i].first.to_string());
      }
    }
    const Date first = rows.front().first;
    const auto span_days = static_cast<std::size_t>(rows.back().first - first) + 1;
    series.dates.reserve(span_days);
    series.values.assign(span_days, kGap);
    for (std::size_t d = 0; d < span_days; ++d) series.dates.push_back(first + static_cast<std::int64_t>(d));
    for (const auto& [date, value] : rows) series.values[static_cast<std::size_t>(date - first)] = value;
    out.push_back(std::move(series));
  }
  return out;
}

std::vector<ChannelSeries> read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_raw_csv(in);
}

void write_raw_csv(std::ostream& out, std::span<const ChannelSeries> series) {
  out << "equipment_id,channel_id,date,value\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << s.equipment_id << ',' << s.channel_id << ',' << s.dates[i].to_string() << ',';
      if (!std::isnan(s.values[i])) out << fmt::format("{}", s.values[i]);
      out << '\n';
    }
  }
}

std::string horizon_key(int horizon) { return "h" + std::to_string(horizon); }

void write_windows_jsonl(std::ostream& out, std::span<const SampleWindow> windows) {
  for (const auto& w : windows) {
    nlohmann::ordered_json record;
    record["sample_id"] = w.sample_id;
    record["values"] = w.values;
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (const auto& [h, y] : w.horizon_labels) labels[horizon_key(h)] = y;
    record["labels"] = std::move(labels);
    record["end_date"] = w.end_date.to_string();
    out << record.dump() << '\n';
  }
}

std::vector<SampleWindow> read_windows_jsonl(std::istream& in) {
  std::vector<SampleWindow> windows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      SampleWindow w;
      w.sample_id = record.at("sample_id").get<std::string>();
      w.values = record.at("values").get<std::vector<double>>();
      w.end_date = Date::parse(record.at("end_date").get<std::string>());
      for (const auto& [key, value] : record.at("labels").items()) {
        if (key.size() < 2 || key[0] != 'h') throw DataError("bad label key '" + key + "'");
        const int y = value.get<int>();
        if (y != 0 && y != 1) throw DataError("label must be 0 or 1");
        w.horizon_labels[std::stoi(key.substr(1))] = y;
      }
      windows.push_back(std::move(w));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fmt::format("windows line {}: {}", line_no, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("windows line {}: {}", line_no, e.what()));
    }
  }
  return windows;
}

std::vector<SampleWindow> read_windows_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_windows_jsonl(in);
}

}  // namespace hybridsentry::dataset
