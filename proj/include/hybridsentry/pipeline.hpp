#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridsentry/dataset.hpp"
#include "hybridsentry/embedding.hpp"
#include "hybridsentry/gbdt.hpp"
#include "hybridsentry/statfeatures.hpp"
#include "json.hpp"

namespace hybridsentry::pipeline {

inline constexpr std::size_t kHybridDim = embedding::kEmbeddingDim + statfeatures::kStatFeatureCount;
using HybridFeatureVector = std::array<double, kHybridDim>;

/// [embedding ; stats], no transformation.
HybridFeatureVector fuse(const embedding::Embedding& embedding, const statfeatures::StatFeatureVector& stats);
/// Span form; throws DataError unless the lengths are 64 and 28.
HybridFeatureVector fuse(std::span<const double> embedding, std::span<const double> stats);

enum class FeatureMode { kHybrid, kStatOnly, kEmbedOnly };

std::string_view to_string(FeatureMode mode);
/// Accepts "hybrid", "stat_only", "embed_only"; throws ConfigError otherwise.
FeatureMode parse_mode(std::string_view text);
bool uses_embeddings(FeatureMode mode);
bool uses_stats(FeatureMode mode);

/// emb_00..emb_63 followed by the statistical manifest names, filtered by mode.
std::vector<std::string> feature_names(FeatureMode mode);
/// "embedding", "basic", "trend" or "volatility" per column.
std::vector<std::string> feature_groups(FeatureMode mode);

/// Features of one window before standardization.
struct SampleFeatures {
  std::string sample_id;
  Date end_date;
  statfeatures::StatFeatureVector stats{};
  std::optional<embedding::Embedding> embedding;
  std::map<int, int> labels;
  bool train = false;
};

/// `{"sample_id","end_date","split","labels","stats","embedding"}` per line;
/// "embedding" is omitted for samples without one.
void write_features_jsonl(std::ostream& out, std::span<const SampleFeatures> samples);
std::vector<SampleFeatures> read_features_jsonl(std::istream& in);
std::vector<SampleFeatures> read_features_jsonl(const std::filesystem::path& path);

/// Stat extraction for every window, joined with embeddings when `provider`
/// is set. Missing embeddings abort with an EmbeddingError listing the ids.
std::vector<SampleFeatures> extract_features(std::span<const dataset::SampleWindow> windows,
                                             const embedding::EmbeddingProvider* provider);

/// Model input row for one sample: embedding dims then standardized stats, filtered by mode.
std::vector<double> model_row(const SampleFeatures& sample, FeatureMode mode,
                              const statfeatures::FeatureStandardizer& standardizer);

gbdt::FeatureMatrix build_matrix(std::span<const SampleFeatures> samples, FeatureMode mode,
                                 const statfeatures::FeatureStandardizer& standardizer);

std::vector<std::uint8_t> horizon_labels(std::span<const SampleFeatures> samples, int horizon);

/// Earliest end date of the validation block: the chronologically last
/// `fraction` of samples, rounded to a whole end date. nullopt when the
/// block would be empty or swallow every sample.
std::optional<Date> validation_start(std::span<const SampleFeatures> samples, double fraction);

struct HorizonModelSet {
  FeatureMode mode = FeatureMode::kHybrid;
  statfeatures::FeatureStandardizer standardizer;
  std::map<int, gbdt::BoostedEnsemble> models;
  std::map<int, gbdt::FitStatus> status;
};

struct TrainOptions {
  gbdt::TrainConfig train;
  std::vector<int> horizons{30, 60, 90};
  double valid_fraction = 0.15;
};

/// One booster per horizon on identical rows with horizon-specific labels.
/// The stat standardizer is fit on all training samples; early stopping uses
/// the chronologically last `valid_fraction` of them.
HorizonModelSet train_multi_horizon(std::span<const SampleFeatures> train, FeatureMode mode,
                                    const TrainOptions& options);

/// Mode and standardizer as stored in a model's metadata.
FeatureMode model_mode(const gbdt::BoostedEnsemble& model);
statfeatures::FeatureStandardizer model_standardizer(const gbdt::BoostedEnsemble& model);

/// Per-feature and per-group split shares of one model.
nlohmann::ordered_json importance_report(const gbdt::BoostedEnsemble& model);

}  // namespace hybridsentry::pipeline
