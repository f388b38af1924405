#include "hybridsentry/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "hybridsentry/eval.hpp"
#include "hybridsentry/statfeatures.hpp"

namespace hybridsentry::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kResolvedConfig = "resolved_config.json";

// ------------------------------------------------------------------ helpers

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

std::string provider_name(ProviderKind kind) { return kind == ProviderKind::kNative ? "native" : "precomputed"; }

ProviderKind parse_provider(std::string_view text) {
  if (text == "native") return ProviderKind::kNative;
  if (text == "precomputed") return ProviderKind::kPrecomputed;
  throw ConfigError(fmt::format("unknown provider '{}' (expected native or precomputed)", text));
}

fs::path model_path(const RunConfig& cfg, int h) { return cfg.out_dir / fmt::format("model_h{}.json", h); }

std::unique_ptr<embedding::EmbeddingProvider> make_provider(const RunConfig& cfg) {
  if (cfg.provider == ProviderKind::kPrecomputed) {
    if (!cfg.embeddings) throw ConfigError("the precomputed provider needs an embeddings file");
    return std::make_unique<embedding::PrecomputedEmbeddings>(embedding::PrecomputedEmbeddings::load(*cfg.embeddings));
  }
  return std::make_unique<embedding::NativeEncoderProvider>(cfg.encoder);
}

Date stored_cutoff(const RunConfig& cfg) {
  const auto j = read_json(cfg.out_dir / "preprocess.json");
  return Date::parse(j.at("cutoff").get<std::string>());
}

std::map<int, gbdt::BoostedEnsemble> load_models(const RunConfig& cfg) {
  std::map<int, gbdt::BoostedEnsemble> models;
  for (const int h : cfg.window.horizons) models[h] = gbdt::BoostedEnsemble::from_json(read_json(model_path(cfg, h)));
  return models;
}

ordered_json dataset_fingerprint(std::span<const pipeline::SampleFeatures> samples, int horizon) {
  std::uint64_t hash = fnv1a("");
  std::size_t n_train = 0, n_test = 0;
  for (const auto& s : samples) {
    (s.train ? n_train : n_test) += 1;
    hash = fnv1a(fmt::format("{}|{}|{}\n", s.sample_id, s.train ? "train" : "test", s.labels.at(horizon)), hash);
  }
  return {{"n_samples", samples.size()}, {"n_train", n_train}, {"n_test", n_test}, {"fnv1a", hex64(hash)}};
}

// ------------------------------------------------------------------ commands

void cmd_synth(const RunConfig& cfg) {
  const synth::Fleet fleet = synth::generate_fleet(cfg.synth);
  {
    std::ofstream out(cfg.input_path(), std::ios::binary);
    if (!out) throw DataError("cannot write " + cfg.input_path().string());
    dataset::write_raw_csv(out, fleet.series);
  }
  {
    std::ofstream out(cfg.out_dir / "events.jsonl", std::ios::binary);
    synth::write_events_jsonl(out, fleet.events);
  }
  ordered_json j;
  j["spec"] = cfg.synth.to_json();
  j["n_series"] = fleet.series.size();
  j["n_events"] = fleet.events.size();
  j["windows"] = fleet.windows;
  j["positive_windows"] = fleet.positive_windows;
  j["realized_rate"] = fleet.realized_rate();
  write_json(cfg.out_dir / "synth.json", j);
  spdlog::info("synth: {} series, {} events, windowed anomaly rate {:.4f}", fleet.series.size(), fleet.events.size(),
               fleet.realized_rate());
}

void cmd_build(const RunConfig& cfg) {
  const auto series = dataset::read_raw_csv(cfg.input_path());
  if (series.empty()) throw DataError("raw CSV has no series");
  const Date cutoff = cfg.cutoff.value_or(auto_cutoff(series, cfg.window, cfg.cutoff_quantile));

  std::vector<dataset::PreparedChannel> prepared(series.size());
  std::vector<std::vector<dataset::SampleWindow>> per_channel(series.size());
  parallel_for(series.size(), [&](std::size_t k) {
    prepared[k] = dataset::prepare_channel(series[k], cutoff, cfg.preprocess);
    per_channel[k] = dataset::make_windows(prepared[k].normalized, prepared[k].labels, cfg.window);
  });

  std::vector<dataset::SampleWindow> windows;
  ordered_json channels = ordered_json::array();
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& p = prepared[k];
    channels.push_back({{"key", series[k].key()},
                        {"days", series[k].size()},
                        {"mean", p.stats.mean},
                        {"std", p.stats.std},
                        {"lower", p.range.lower},
                        {"upper", p.range.upper},
                        {"anomalous_days", std::count(p.labels.begin(), p.labels.end(), std::uint8_t{1})},
                        {"windows", per_channel[k].size()}});
    std::move(per_channel[k].begin(), per_channel[k].end(), std::back_inserter(windows));
  }
  if (windows.empty()) throw DataError("no series is long enough for a single window");

  std::size_t n_train = 0;
  std::map<int, std::size_t> positives;
  for (const auto& w : windows) {
    if (w.end_date < cutoff) ++n_train;
    for (const auto& [h, y] : w.horizon_labels) positives[h] += static_cast<std::size_t>(y);
  }
  ordered_json rates = ordered_json::object();
  for (const auto& [h, c] : positives) rates[dataset::horizon_key(h)] = static_cast<double>(c) / windows.size();

  {
    std::ofstream out(cfg.out_dir / "windows.jsonl", std::ios::binary);
    dataset::write_windows_jsonl(out, windows);
  }
  ordered_json j;
  j["cutoff"] = cutoff.to_string();
  j["cutoff_source"] = cfg.cutoff ? "config" : "auto";
  j["n_windows"] = windows.size();
  j["n_train"] = n_train;
  j["n_test"] = windows.size() - n_train;
  j["label_rates"] = std::move(rates);
  j["channels"] = std::move(channels);
  write_json(cfg.out_dir / "preprocess.json", j);
  spdlog::info("build: {} windows ({} train / {} test), cutoff {}", windows.size(), n_train, windows.size() - n_train,
               cutoff.to_string());
}

void cmd_features(const RunConfig& cfg, bool export_embeddings) {
  const auto windows = dataset::read_windows_jsonl(cfg.out_dir / "windows.jsonl");
  const Date cutoff = stored_cutoff(cfg);
  std::unique_ptr<embedding::EmbeddingProvider> provider;
  if (pipeline::uses_embeddings(cfg.mode) || export_embeddings) provider = make_provider(cfg);

  auto samples = pipeline::extract_features(windows, provider.get());
  for (auto& s : samples) s.train = s.end_date < cutoff;
  {
    std::ofstream out(cfg.out_dir / "features.jsonl", std::ios::binary);
    pipeline::write_features_jsonl(out, samples);
  }
  if (export_embeddings) {
    std::vector<std::pair<std::string, embedding::Embedding>> records;
    records.reserve(samples.size());
    for (const auto& s : samples) records.emplace_back(s.sample_id, *s.embedding);
    std::ofstream out(cfg.out_dir / "embeddings.jsonl", std::ios::binary);
    embedding::write_embeddings_jsonl(out, records);
  }

  ordered_json j;
  j["mode"] = pipeline::to_string(cfg.mode);
  j["dimension"] = pipeline::feature_names(cfg.mode).size();
  j["layout"] = {{"embedding", {{"offset", 0}, {"size", embedding::kEmbeddingDim}}},
                 {"statistical", {{"offset", embedding::kEmbeddingDim}, {"size", statfeatures::kStatFeatureCount}}}};
  j["feature_names"] = pipeline::feature_names(cfg.mode);
  j["feature_groups"] = pipeline::feature_groups(cfg.mode);
  j["statistical_features"] = statfeatures::manifest_json();
  j["manifest_hash"] = gbdt::manifest_hash(pipeline::feature_names(cfg.mode));
  write_json(cfg.out_dir / "manifest.json", j);
  spdlog::info("features: {} samples, mode {}", samples.size(), pipeline::to_string(cfg.mode));
}

void cmd_train(const RunConfig& cfg) {
  const auto samples = pipeline::read_features_jsonl(cfg.out_dir / "features.jsonl");
  std::vector<pipeline::SampleFeatures> train;
  for (const auto& s : samples) {
    if (s.train) train.push_back(s);
  }
  pipeline::TrainOptions options;
  options.train = cfg.train;
  options.horizons = cfg.window.horizons;
  options.valid_fraction = cfg.valid_fraction;
  const auto set = pipeline::train_multi_horizon(train, cfg.mode, options);
  for (const auto& [h, model] : set.models) write_json(model_path(cfg, h), model.to_json());
}

void cmd_eval(const RunConfig& cfg, bool emit_curves) {
  const auto samples = pipeline::read_features_jsonl(cfg.out_dir / "features.jsonl");
  std::vector<pipeline::SampleFeatures> test;
  for (const auto& s : samples) {
    if (!s.train) test.push_back(s);
  }
  if (test.empty()) throw DataError("no test samples after the cutoff");
  for (const auto& [h, model] : load_models(cfg)) {
    const auto mode = pipeline::model_mode(model);
    const auto standardizer = pipeline::model_standardizer(model);
    const auto labels = pipeline::horizon_labels(test, h);
    std::vector<double> probs(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      probs[i] = model.predict_proba(pipeline::model_row(test[i], mode, standardizer));
    }
    const auto report = eval::evaluate(h, labels, probs, cfg.threshold);

    ordered_json j = report.to_json();
    j["mode"] = pipeline::to_string(mode);
    j["model"] = {{"manifest_hash", model.manifest_hash()},
                  {"num_trees", model.trees.size()},
                  {"best_iteration", model.best_iteration},
                  {"best_valid_auc", model.best_valid_auc ? ordered_json(*model.best_valid_auc) : ordered_json(nullptr)}};
    j["dataset"] = dataset_fingerprint(samples, h);
    j["config"] = cfg.to_json(false);
    write_json(cfg.out_dir / fmt::format("report_h{}.json", h), j);

    if (emit_curves) {
      std::string csv = "threshold,fpr,tpr,precision,recall\n";
      for (const auto& p : report.curve) {
        csv += fmt::format("{},{},{},{},{}\n", p.threshold, p.fpr, p.tpr, p.precision, p.recall);
      }
      write_text(cfg.out_dir / fmt::format("curves_h{}.csv", h), csv);
    }
    spdlog::info("eval h{}: roc_auc {}, precision {:.4f}, recall {:.4f}, central width {:.4f}{}", h,
                 report.roc_auc ? fmt::format("{:.4f}", *report.roc_auc) : "n/a", report.metrics.precision,
                 report.metrics.recall, report.concentration.central_width,
                 report.concentration.flagged ? " (concentrated)" : "");
  }
}

void cmd_predict(const RunConfig& cfg, const fs::path& windows_path, const fs::path& output) {
  const auto models = load_models(cfg);
  bool needs_embeddings = false;
  for (const auto& [h, model] : models) needs_embeddings |= pipeline::uses_embeddings(pipeline::model_mode(model));
  std::unique_ptr<embedding::EmbeddingProvider> provider;
  if (needs_embeddings) provider = make_provider(cfg);

  const auto windows = dataset::read_windows_jsonl(windows_path);
  const auto samples = pipeline::extract_features(windows, provider.get());
  std::string text;
  for (const auto& s : samples) {
    ordered_json j;
    j["sample_id"] = s.sample_id;
    for (const auto& [h, model] : models) {
      const auto row = pipeline::model_row(s, pipeline::model_mode(model), pipeline::model_standardizer(model));
      j[dataset::horizon_key(h)] = model.predict_proba(row);
    }
    text += j.dump() + "\n";
  }
  write_text(output, text);
  spdlog::info("predict: {} samples -> {}", samples.size(), output.string());
}

void cmd_importance(const RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& [h, model] : load_models(cfg)) j[dataset::horizon_key(h)] = pipeline::importance_report(model);
  write_json(cfg.out_dir / "importance.json", j);
  for (const auto& [key, report] : j.items()) {
    spdlog::info("importance {}: embedding {:.3f}, statistical {:.3f}", key,
                 report.at("paths").at("embedding").get<double>(), report.at("paths").at("statistical").get<double>());
  }
}

void cmd_bench(const RunConfig& cfg, std::size_t max_samples, int repeats) {
  const auto models = load_models(cfg);
  const auto windows_all = dataset::read_windows_jsonl(cfg.out_dir / "windows.jsonl");
  const Date cutoff = stored_cutoff(cfg);
  std::vector<dataset::SampleWindow> windows;
  for (const auto& w : windows_all) {
    if (!(w.end_date < cutoff) && windows.size() < max_samples) windows.push_back(w);
  }
  if (windows.empty()) throw DataError("no test windows to benchmark");

  // Embeddings come from a lookup table, as in deployment with an external encoder.
  bool needs_embeddings = false;
  for (const auto& [h, model] : models) needs_embeddings |= pipeline::uses_embeddings(pipeline::model_mode(model));
  embedding::PrecomputedEmbeddings table;
  if (needs_embeddings) {
    if (cfg.provider == ProviderKind::kPrecomputed) {
      if (!cfg.embeddings) throw ConfigError("the precomputed provider needs an embeddings file");
      table = embedding::PrecomputedEmbeddings::load(*cfg.embeddings);
    } else {
      const embedding::NativeEncoderProvider native(cfg.encoder);
      std::unordered_map<std::string, embedding::Embedding> entries;
      for (const auto& w : windows) entries.emplace(w.sample_id, native.embed(w));
      table = embedding::PrecomputedEmbeddings(std::move(entries));
    }
  }

  struct Prepared {
    pipeline::FeatureMode mode;
    statfeatures::FeatureStandardizer standardizer;
  };
  std::map<int, Prepared> prepared;
  for (const auto& [h, model] : models) prepared[h] = {pipeline::model_mode(model), pipeline::model_standardizer(model)};

  using clock = std::chrono::steady_clock;
  std::vector<double> per_sample_ms;
  double checksum = 0.0;
  for (int r = 0; r < repeats; ++r) {
    for (const auto& w : windows) {
      const auto t0 = clock::now();
      pipeline::SampleFeatures s;
      s.sample_id = w.sample_id;
      s.stats = statfeatures::extract_stat_features(w.values);
      if (needs_embeddings) s.embedding = table.lookup(w.sample_id);
      for (const auto& [h, model] : models) {
        const auto& p = prepared.at(h);
        checksum += model.predict_proba(pipeline::model_row(s, p.mode, p.standardizer));
      }
      per_sample_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
  }
  std::vector<double> sorted = per_sample_ms;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (const double v : per_sample_ms) total += v;
  const double mean_ms = total / static_cast<double>(per_sample_ms.size());

  ordered_json j;
  j["n_samples"] = windows.size();
  j["repeats"] = repeats;
  j["horizons"] = models.size();
  j["mean_ms"] = mean_ms;
  j["p50_ms"] = sorted[sorted.size() / 2];
  j["p95_ms"] = sorted[std::min(sorted.size() - 1, sorted.size() * 95 / 100)];
  j["max_ms"] = sorted.back();
  j["reference_ms"] = 4.5;
  j["checksum"] = checksum;
  write_json(cfg.out_dir / "bench.json", j);
  std::cout << fmt::format("bench: {} samples x {} horizons, mean {:.4f} ms/sample (p95 {:.4f} ms)\n", windows.size(),
                           models.size(), mean_ms, j["p95_ms"].get<double>());
}

}  // namespace

// ------------------------------------------------------------------ config

void RunConfig::validate() const {
  window.validate();
  encoder.validate();
  train.validate();
  synth.validate();
  if (encoder.context_length != window.lookback) {
    throw ConfigError(fmt::format("encoder context_length {} differs from the window lookback {}",
                                  encoder.context_length, window.lookback));
  }
  if (preprocess.max_ffill_days < 0) throw ConfigError("max_ffill_days must be >= 0");
  if (!(preprocess.clip_k > 0.0)) throw ConfigError("clip_k must be > 0");
  if (!(preprocess.normal_fraction > 0.0 && preprocess.normal_fraction <= 1.0)) {
    throw ConfigError("normal_fraction must be in (0, 1]");
  }
  if (!(cutoff_quantile > 0.0 && cutoff_quantile < 1.0)) throw ConfigError("cutoff_quantile must be in (0, 1)");
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) throw ConfigError("valid_fraction must be in [0, 1)");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  if (provider == ProviderKind::kPrecomputed && !embeddings) {
    throw ConfigError("the precomputed provider needs an embeddings file");
  }
}

void RunConfig::apply_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  encoder.seed = value;
  synth.seed = value;
}

fs::path RunConfig::input_path() const { return input_csv.value_or(out_dir / "raw.csv"); }

ordered_json RunConfig::to_json(bool with_paths) const {
  ordered_json j;
  if (with_paths) {
    j["out_dir"] = out_dir.string();
    j["input_csv"] = input_path().string();
    j["embeddings"] = embeddings ? ordered_json(embeddings->string()) : ordered_json(nullptr);
  }
  j["seed"] = seed;
  j["mode"] = pipeline::to_string(mode);
  j["provider"] = provider_name(provider);
  j["encoder"] = encoder.to_json();
  j["window"] = {{"lookback", window.lookback}, {"stride", window.stride}, {"horizons", window.horizons}};
  j["preprocess"] = {{"max_ffill_days", preprocess.max_ffill_days},
                     {"clip_k", preprocess.clip_k},
                     {"normal_fraction", preprocess.normal_fraction}};
  j["cutoff"] = cutoff ? ordered_json(cutoff->to_string()) : ordered_json(nullptr);
  j["cutoff_quantile"] = cutoff_quantile;
  j["train"] = train.to_json();
  j["valid_fraction"] = valid_fraction;
  j["threshold"] = threshold;
  j["synth"] = synth.to_json();
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"out_dir", "input_csv", "embeddings", "seed", "mode", "provider", "encoder", "window", "preprocess",
              "cutoff", "cutoff_quantile", "train", "valid_fraction", "threshold", "synth"},
             "config");
  RunConfig c;
  try {
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("input_csv") && !j.at("input_csv").is_null()) c.input_csv = j.at("input_csv").get<std::string>();
    if (j.contains("embeddings") && !j.at("embeddings").is_null()) c.embeddings = j.at("embeddings").get<std::string>();
    if (j.contains("mode")) c.mode = pipeline::parse_mode(j.at("mode").get<std::string>());
    if (j.contains("provider")) c.provider = parse_provider(j.at("provider").get<std::string>());
    if (j.contains("encoder")) {
      check_keys(j.at("encoder"),
                 {"context_length", "d_model", "n_layers", "seed", "lora_rank", "lora_alpha", "lora_up_init_std"},
                 "encoder");
      c.encoder = embedding::EncoderConfig::from_json(j.at("encoder"));
    }
    if (j.contains("window")) {
      const auto& w = j.at("window");
      check_keys(w, {"lookback", "stride", "horizons"}, "window");
      c.window.lookback = w.value("lookback", c.window.lookback);
      c.window.stride = w.value("stride", c.window.stride);
      if (w.contains("horizons")) c.window.horizons = w.at("horizons").get<std::vector<int>>();
      if (!w.contains("lookback") || !j.contains("encoder") || !j.at("encoder").contains("context_length")) {
        c.encoder.context_length = c.window.lookback;
      }
    }
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      check_keys(p, {"max_ffill_days", "clip_k", "normal_fraction"}, "preprocess");
      c.preprocess.max_ffill_days = p.value("max_ffill_days", c.preprocess.max_ffill_days);
      c.preprocess.clip_k = p.value("clip_k", c.preprocess.clip_k);
      c.preprocess.normal_fraction = p.value("normal_fraction", c.preprocess.normal_fraction);
    }
    if (j.contains("cutoff") && !j.at("cutoff").is_null()) c.cutoff = Date::parse(j.at("cutoff").get<std::string>());
    c.cutoff_quantile = j.value("cutoff_quantile", c.cutoff_quantile);
    if (j.contains("train")) c.train = gbdt::TrainConfig::from_json(j.at("train"));
    c.valid_fraction = j.value("valid_fraction", c.valid_fraction);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("synth")) {
      check_keys(j.at("synth"),
                 {"n_equipment", "channels_per_equipment", "days", "start_date", "seasonal_amplitude",
                  "weekly_amplitude", "noise_std", "anomaly_rate_target", "precursor", "sudden_onset_fraction",
                  "min_event_days", "max_event_days", "event_magnitude_min", "event_magnitude_max", "event_cooldown",
                  "gap_rate", "max_gap_days", "lookback", "max_horizon", "quiet_fraction", "limit_share", "seed"},
                 "synth");
      c.synth = synth::FleetSpec::from_json(j.at("synth"));
    }
    c.apply_seed(j.value("seed", c.seed));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

Date auto_cutoff(std::span<const dataset::ChannelSeries> series, const dataset::WindowConfig& window,
                 double quantile) {
  std::vector<Date> ends;
  const auto h_max = static_cast<std::size_t>(window.max_horizon());
  const auto lookback = static_cast<std::size_t>(window.lookback);
  for (const auto& s : series) {
    for (std::size_t t = lookback - 1; t + h_max < s.size(); t += static_cast<std::size_t>(window.stride)) {
      ends.push_back(s.dates[t]);
    }
  }
  if (ends.empty()) throw DataError("no series is long enough for a single window");
  std::sort(ends.begin(), ends.end());
  const auto idx = std::min(ends.size() - 1, static_cast<std::size_t>(quantile * static_cast<double>(ends.size())));
  return ends[idx];
}

// ------------------------------------------------------------------ entry

int run(std::span<const std::string> args) {
  std::vector<std::string> storage{"hybridsentry"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());

  CLI::App app{"Hybrid embedding + statistical-feature anomaly prediction for equipment time series"};
  app.require_subcommand(1);
  std::string config_path, out_dir, input, embeddings, provider, mode, cutoff;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--seed", seed, "Seed for the booster, the native encoder and the generator");
  app.add_option("--out-dir", out_dir, "Run directory");
  app.add_option("--input", input, "Raw CSV (default <out-dir>/raw.csv)");
  app.add_option("--embeddings", embeddings, "Embedding interchange file (selects the precomputed provider)");
  app.add_option("--provider", provider, "native | precomputed");
  app.add_option("--mode", mode, "hybrid | stat_only | embed_only");
  app.add_option("--cutoff", cutoff, "Temporal split date YYYY-MM-DD");
  app.add_flag("--quiet", quiet, "Only log warnings and errors");

  bool export_embeddings = false, emit_curves = false;
  std::string windows_path, output_path;
  std::size_t bench_samples = 1000;
  int bench_repeats = 3;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fleet (raw.csv, events.jsonl)");
  auto* build_cmd = app.add_subcommand("build", "Preprocess, label and window the raw CSV");
  auto* features_cmd = app.add_subcommand("features", "Statistical features + embedding join");
  features_cmd->add_flag("--export-embeddings", export_embeddings, "Also write embeddings.jsonl");
  auto* train_cmd = app.add_subcommand("train", "Fit one booster per horizon");
  auto* eval_cmd = app.add_subcommand("eval", "Per-horizon reports on the test split");
  eval_cmd->add_flag("--emit-curves", emit_curves, "Write curves_h*.csv");
  auto* predict_cmd = app.add_subcommand("predict", "Score windows with the trained models");
  predict_cmd->add_option("--windows", windows_path, "Windows JSON-lines (default <out-dir>/windows.jsonl)");
  predict_cmd->add_option("--output", output_path, "Predictions (default <out-dir>/predictions.jsonl)");
  auto* importance_cmd = app.add_subcommand("importance", "Split-based importance per horizon and group");
  auto* bench_cmd = app.add_subcommand("bench", "Per-sample inference latency");
  bench_cmd->add_option("--samples", bench_samples, "Test windows to time")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", bench_repeats, "Passes over the windows")->check(CLI::PositiveNumber);
  auto* all_cmd = app.add_subcommand("all", "synth, build, features, train, eval and importance");
  all_cmd->add_flag("--emit-curves", emit_curves, "Write curves_h*.csv");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kSuccess : kConfigFailure;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_json(read_json(config_path));
    if (seed) cfg.apply_seed(*seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!input.empty()) cfg.input_csv = input;
    if (!embeddings.empty()) {
      cfg.embeddings = embeddings;
      cfg.provider = ProviderKind::kPrecomputed;
    }
    if (!provider.empty()) cfg.provider = parse_provider(provider);
    if (!mode.empty()) cfg.mode = pipeline::parse_mode(mode);
    if (!cutoff.empty()) cfg.cutoff = Date::parse(cutoff);
    cfg.validate();

    fs::create_directories(cfg.out_dir);
    write_json(cfg.out_dir / kResolvedConfig, cfg.to_json());

    if (*synth_cmd) cmd_synth(cfg);
    if (*build_cmd) cmd_build(cfg);
    if (*features_cmd) cmd_features(cfg, export_embeddings);
    if (*train_cmd) cmd_train(cfg);
    if (*eval_cmd) cmd_eval(cfg, emit_curves);
    if (*predict_cmd) {
      cmd_predict(cfg, windows_path.empty() ? cfg.out_dir / "windows.jsonl" : fs::path(windows_path),
                  output_path.empty() ? cfg.out_dir / "predictions.jsonl" : fs::path(output_path));
    }
    if (*importance_cmd) cmd_importance(cfg);
    if (*bench_cmd) cmd_bench(cfg, bench_samples, bench_repeats);
    if (*all_cmd) {
      cmd_synth(cfg);
      cmd_build(cfg);
      cmd_features(cfg, false);
      cmd_train(cfg);
      cmd_eval(cfg, emit_curves);
      cmd_importance(cfg);
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigFailure;
  } catch (const EmbeddingError& e) {
    spdlog::error("embedding error: {}", e.what());
    return kEmbeddingFailure;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kDataFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kDataFailure;
  }
  return kSuccess;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace hybridsentry::cli
