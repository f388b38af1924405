#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridsentry/common.hpp"
#include "hybridsentry/dataset.hpp"
#include "hybridsentry/embedding.hpp"
#include "hybridsentry/gbdt.hpp"
#include "hybridsentry/pipeline.hpp"
#include "hybridsentry/synth.hpp"
#include "json.hpp"

namespace hybridsentry::cli {

enum ExitCode : int { kSuccess = 0, kConfigFailure = 1, kDataFailure = 2, kEmbeddingFailure = 3 };

enum class ProviderKind { kNative, kPrecomputed };

struct RunConfig {
  std::filesystem::path out_dir = "run";
  /// Raw CSV; defaults to <out_dir>/raw.csv.
  std::optional<std::filesystem::path> input_csv;
  /// Interchange file for the precomputed provider.
  std::optional<std::filesystem::path> embeddings;
  ProviderKind provider = ProviderKind::kNative;
  embedding::EncoderConfig encoder;
  dataset::WindowConfig window;
  dataset::PreprocessConfig preprocess;
  /// Unset: the `cutoff_quantile` quantile of all window end dates.
  std::optional<Date> cutoff;
  double cutoff_quantile = 0.8;
  gbdt::TrainConfig train;
  double valid_fraction = 0.15;
  pipeline::FeatureMode mode = pipeline::FeatureMode::kHybrid;
  double threshold = 0.5;
  synth::FleetSpec synth;
  /// Propagated to the booster, the native encoder and the generator.
  std::uint64_t seed = 42;

  RunConfig() { apply_seed(seed); }

  /// Throws ConfigError.
  void validate() const;
  void apply_seed(std::uint64_t value);
  [[nodiscard]] std::filesystem::path input_path() const;
  /// Paths are left out when `with_paths` is false so the echo is location independent.
  [[nodiscard]] nlohmann::ordered_json to_json(bool with_paths = true) const;
  /// Unknown keys are errors.
  static RunConfig from_json(const nlohmann::json& j);
};

/// End date at the given quantile of all window end dates.
Date auto_cutoff(std::span<const dataset::ChannelSeries> series, const dataset::WindowConfig& window,
                 double quantile);

/// Runs one command. `args` excludes the program name. Returns the exit status.
int run(std::span<const std::string> args);
int run(int argc, char** argv);

}  // namespace hybridsentry::cli
