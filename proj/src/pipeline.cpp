#include "hybridsentry/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hybridsentry/common.hpp"

namespace hybridsentry::pipeline {

namespace {

constexpr std::size_t kListedMissing = 10;

}  // namespace

HybridFeatureVector fuse(const embedding::Embedding& embedding, const statfeatures::StatFeatureVector& stats) {
  HybridFeatureVector out{};
  std::copy(embedding.begin(), embedding.end(), out.begin());
  std::copy(stats.begin(), stats.end(), out.begin() + embedding::kEmbeddingDim);
  return out;
}

HybridFeatureVector fuse(std::span<const double> embedding, std::span<const double> stats) {
  if (embedding.size() != embedding::kEmbeddingDim || stats.size() != statfeatures::kStatFeatureCount) {
    throw DataError(fmt::format("fuse expects 64 + 28 values, got {} + {}", embedding.size(), stats.size()));
  }
  HybridFeatureVector out{};
  std::copy(embedding.begin(), embedding.end(), out.begin());
  std::copy(stats.begin(), stats.end(), out.begin() + embedding::kEmbeddingDim);
  return out;
}

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::kHybrid: return "hybrid";
    case FeatureMode::kStatOnly: return "stat_only";
    case FeatureMode::kEmbedOnly: return "embed_only";
  }
  return "hybrid";
}

FeatureMode parse_mode(std::string_view text) {
  if (text == "hybrid") return FeatureMode::kHybrid;
  if (text == "stat_only") return FeatureMode::kStatOnly;
  if (text == "embed_only") return FeatureMode::kEmbedOnly;
  throw ConfigError(fmt::format("unknown mode '{}' (expected hybrid, stat_only or embed_only)", text));
}

bool uses_embeddings(FeatureMode mode) { return mode != FeatureMode::kStatOnly; }
bool uses_stats(FeatureMode mode) { return mode != FeatureMode::kEmbedOnly; }

std::vector<std::string> feature_names(FeatureMode mode) {
  std::vector<std::string> names;
  if (uses_embeddings(mode)) {
    for (std::size_t i = 0; i < embedding::kEmbeddingDim; ++i) names.push_back(fmt::format("emb_{:02}", i));
  }
  if (uses_stats(mode)) {
    for (const auto& spec : statfeatures::feature_manifest()) names.emplace_back(spec.name);
  }
  return names;
}

std::vector<std::string> feature_groups(FeatureMode mode) {
  std::vector<std::string> groups;
  if (uses_embeddings(mode)) groups.assign(embedding::kEmbeddingDim, "embedding");
  if (uses_stats(mode)) {
    for (const auto& spec : statfeatures::feature_manifest()) groups.emplace_back(spec.group);
  }
  return groups;
}

std::vector<SampleFeatures> extract_features(std::span<const dataset::SampleWindow> windows,
                                             const embedding::EmbeddingProvider* provider) {
  std::vector<SampleFeatures> out(windows.size());
  std::vector<std::uint8_t> missing(windows.size(), 0);
  parallel_for(windows.size(), [&](std::size_t i) {
    const auto& w = windows[i];
    SampleFeatures& s = out[i];
    s.sample_id = w.sample_id;
    s.end_date = w.end_date;
    s.labels = w.horizon_labels;
    s.stats = statfeatures::extract_stat_features(w.values);
    if (provider != nullptr) {
      try {
        s.embedding = provider->embed(w);
      } catch (const EmbeddingError&) {
        missing[i] = 1;
      }
    }
  });

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (missing[i] != 0) ids.push_back(windows[i].sample_id);
  }
  if (!ids.empty()) {
    std::string listed;
    for (std::size_t i = 0; i < std::min(ids.size(), kListedMissing); ++i) listed += (i ? ", " : "") + ids[i];
    if (ids.size() > kListedMissing) listed += fmt::format(", ... ({} more)", ids.size() - kListedMissing);
    throw EmbeddingError(fmt::format("missing embedding for {} sample(s): {}", ids.size(), listed));
  }
  return out;
}

void write_features_jsonl(std::ostream& out, std::span<const SampleFeatures> samples) {
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["sample_id"] = s.sample_id;
    j["end_date"] = s.end_date.to_string();
    j["split"] = s.train ? "train" : "test";
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (const auto& [h, y] : s.labels) labels[dataset::horizon_key(h)] = y;
    j["labels"] = std::move(labels);
    j["stats"] = s.stats;
    if (s.embedding) j["embedding"] = *s.embedding;
    out << j.dump() << '\n';
  }
}

std::vector<SampleFeatures> read_features_jsonl(std::istream& in) {
  std::vector<SampleFeatures> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleFeatures s;
      s.sample_id = j.at("sample_id").get<std::string>();
      s.end_date = Date::parse(j.at("end_date").get<std::string>());
      const auto split = j.at("split").get<std::string>();
      if (split != "train" && split != "test") throw DataError("split must be train or test");
      s.train = split == "train";
      for (const auto& [key, value] : j.at("labels").items()) {
        if (key.size() < 2 || key[0] != 'h') throw DataError("label key '" + key + "' is not h<days>");
        s.labels[std::stoi(key.substr(1))] = value.get<int>();
      }
      const auto stats = j.at("stats").get<std::vector<double>>();
      if (stats.size() != statfeatures::kStatFeatureCount) throw DataError("stats must hold 28 values");
      std::copy(stats.begin(), stats.end(), s.stats.begin());
      if (j.contains("embedding")) {
        const auto e = j.at("embedding").get<std::vector<double>>();
        if (e.size() != embedding::kEmbeddingDim) {
          throw EmbeddingError(fmt::format("features line {} (sample_id '{}'): embedding has {} values, expected 64",
                                           line_no, s.sample_id, e.size()));
        }
        embedding::Embedding emb{};
        std::copy(e.begin(), e.end(), emb.begin());
        s.embedding = emb;
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fmt::format("features line {}: {}", line_no, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("features line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::vector<SampleFeatures> read_features_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file " + path.string());
  return read_features_jsonl(in);
}

std::vector<double> model_row(const SampleFeatures& sample, FeatureMode mode,
                              const statfeatures::FeatureStandardizer& standardizer) {
  std::vector<double> row;
  row.reserve(kHybridDim);
  if (uses_embeddings(mode)) {
    if (!sample.embedding) throw EmbeddingError("missing embedding for sample_id '" + sample.sample_id + "'");
    row.insert(row.end(), sample.embedding->begin(), sample.embedding->end());
  }
  if (uses_stats(mode)) {
    const auto z = standardizer.apply(sample.stats);
    row.insert(row.end(), z.begin(), z.end());
  }
  return row;
}

gbdt::FeatureMatrix build_matrix(std::span<const SampleFeatures> samples, FeatureMode mode,
                                 const statfeatures::FeatureStandardizer& standardizer) {
  const std::size_t width = (uses_embeddings(mode) ? embedding::kEmbeddingDim : 0) +
                            (uses_stats(mode) ? statfeatures::kStatFeatureCount : 0);
  gbdt::FeatureMatrix m(samples.size(), width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = model_row(samples[i], mode, standardizer);
    std::copy(row.begin(), row.end(), m.row(i).begin());
  }
  return m;
}

std::vector<std::uint8_t> horizon_labels(std::span<const SampleFeatures> samples, int horizon) {
  std::vector<std::uint8_t> y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = samples[i].labels.find(horizon);
    if (it == samples[i].labels.end()) {
      throw DataError(fmt::format("sample '{}' has no label for horizon {}", samples[i].sample_id, horizon));
    }
    y[i] = it->second != 0 ? 1 : 0;
  }
  return y;
}

std::optional<Date> validation_start(std::span<const SampleFeatures> samples, double fraction) {
  if (samples.empty() || fraction <= 0.0) return std::nullopt;
  std::vector<Date> ends;
  ends.reserve(samples.size());
  for (const auto& s : samples) ends.push_back(s.end_date);
  std::sort(ends.begin(), ends.end());
  const auto cut = static_cast<std::size_t>(static_cast<double>(ends.size()) * (1.0 - fraction));
  if (cut >= ends.size()) return std::nullopt;
  const Date start = ends[cut];
  if (start == ends.front()) return std::nullopt;
  return start;
}

HorizonModelSet train_multi_horizon(std::span<const SampleFeatures> train, FeatureMode mode,
                                    const TrainOptions& options) {
  if (train.empty()) throw DataError("no training samples");
  if (options.horizons.empty()) throw ConfigError("at least one horizon is required");
  if (!(options.valid_fraction >= 0.0 && options.valid_fraction < 1.0)) {
    throw ConfigError("valid_fraction must be in [0, 1)");
  }

  HorizonModelSet set;
  set.mode = mode;
  std::vector<statfeatures::StatFeatureVector> stat_rows;
  stat_rows.reserve(train.size());
  for (const auto& s : train) stat_rows.push_back(s.stats);
  set.standardizer = statfeatures::FeatureStandardizer::fit(stat_rows);

  std::vector<SampleFeatures> fit_rows, valid_rows;
  const auto valid_from = validation_start(train, options.valid_fraction);
  for (const auto& s : train) (valid_from && s.end_date >= *valid_from ? valid_rows : fit_rows).push_back(s);

  const gbdt::FeatureMatrix fit_x = build_matrix(fit_rows, mode, set.standardizer);
  const gbdt::FeatureMatrix valid_x = build_matrix(valid_rows, mode, set.standardizer);
  const auto names = feature_names(mode);
  const auto groups = feature_groups(mode);

  std::vector<gbdt::FitResult> results(options.horizons.size());
  parallel_for(options.horizons.size(), [&](std::size_t k) {
    const int h = options.horizons[k];
    const auto fit_y = horizon_labels(fit_rows, h);
    const auto valid_y = horizon_labels(valid_rows, h);
    results[k] = gbdt::fit(fit_x, fit_y, valid_x, valid_y, options.train, names);

    auto& meta = results[k].model.metadata;
    meta["horizon"] = h;
    meta["mode"] = to_string(mode);
    meta["feature_groups"] = groups;
    meta["standardizer"] = set.standardizer.to_json();
    meta["fit_status"] = gbdt::to_string(results[k].status);
    meta["n_fit"] = fit_rows.size();
    meta["n_valid"] = valid_rows.size();
    meta["n_fit_positive"] = std::count(fit_y.begin(), fit_y.end(), std::uint8_t{1});
    meta["n_valid_positive"] = std::count(valid_y.begin(), valid_y.end(), std::uint8_t{1});
    meta["valid_start"] = valid_from ? nlohmann::ordered_json(valid_from->to_string()) : nlohmann::ordered_json(nullptr);
  });

  for (std::size_t k = 0; k < options.horizons.size(); ++k) {
    const int h = options.horizons[k];
    spdlog::info("h{} {}: {} trees, best_iteration {}, valid auc {}", h, to_string(mode),
                 results[k].model.trees.size(), results[k].model.best_iteration,
                 results[k].model.best_valid_auc ? fmt::format("{:.4f}", *results[k].model.best_valid_auc) : "n/a");
    set.status[h] = results[k].status;
    set.models[h] = std::move(results[k].model);
  }
  return set;
}

FeatureMode model_mode(const gbdt::BoostedEnsemble& model) {
  if (!model.metadata.contains("mode")) throw DataError("model metadata has no feature mode");
  return parse_mode(model.metadata.at("mode").get<std::string>());
}

statfeatures::FeatureStandardizer model_standardizer(const gbdt::BoostedEnsemble& model) {
  if (!model.metadata.contains("standardizer")) throw DataError("model metadata has no standardizer");
  return statfeatures::FeatureStandardizer::from_json(model.metadata.at("standardizer"));
}

nlohmann::ordered_json importance_report(const gbdt::BoostedEnsemble& model) {
  const auto counts = model.split_counts();
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  std::vector<std::string> groups;
  if (model.metadata.contains("feature_groups")) {
    groups = model.metadata.at("feature_groups").get<std::vector<std::string>>();
  }
  if (groups.size() != counts.size()) groups.assign(counts.size(), "unknown");

  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });

  auto share = [&](std::uint64_t c) { return total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total); };
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const auto f : order) {
    features.push_back(
        {{"name", model.feature_names[f]}, {"group", groups[f]}, {"splits", counts[f]}, {"share", share(counts[f])}});
  }

  std::map<std::string, std::uint64_t> by_group;
  std::uint64_t embedding_splits = 0;
  for (std::size_t f = 0; f < counts.size(); ++f) {
    by_group[groups[f]] += counts[f];
    if (groups[f] == "embedding") embedding_splits += counts[f];
  }
  nlohmann::ordered_json group_json = nlohmann::ordered_json::object();
  for (const auto& [g, c] : by_group) group_json[g] = {{"splits", c}, {"share", share(c)}};

  nlohmann::ordered_json j;
  j["horizon"] = model.metadata.value("horizon", 0);
  j["mode"] = model.metadata.value("mode", std::string("unknown"));
  j["total_splits"] = total;
  j["paths"] = {{"embedding", share(embedding_splits)}, {"statistical", share(total - embedding_splits)}};
  j["groups"] = std::move(group_json);
  j["features"] = std::move(features);
  return j;
}

}  // namespace hybridsentry::pipeline
