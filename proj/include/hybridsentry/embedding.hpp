#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybridsentry/common.hpp"
#include "hybridsentry/dataset.hpp"
#include "json.hpp"

namespace hybridsentry::embedding {

inline constexpr std::size_t kEmbeddingDim = 64;
using Embedding = std::array<double, kEmbeddingDim>;

/// Frozen base map plus low-rank delta: W' = W0 + (alpha/r) * up * down.
/// Dropout only applies while fine-tuning, so forward passes ignore it.
struct LoraAdapter {
  Eigen::MatrixXd base;  // d_out x d_in
  Eigen::MatrixXd down;  // r x d_in  (A)
  Eigen::MatrixXd up;    // d_out x r (B)
  double alpha = 32.0;
  double dropout_rate = 0.1;

  [[nodiscard]] int rank() const { return static_cast<int>(down.rows()); }
  [[nodiscard]] double scale() const { return alpha / static_cast<double>(rank()); }
  /// Throws DataError on inconsistent shapes or rank < 1.
  void validate() const;
  [[nodiscard]] Eigen::MatrixXd merged_weight() const;

  /// down ~ N(0, 1/d_in), up = 0, so the adapter starts as the identity delta.
  static LoraAdapter attach(Eigen::MatrixXd base, int rank, double alpha, Rng& rng);
};

/// (W0 + (alpha/r) B A) x, evaluated as W0 x + (alpha/r) B (A x).
Eigen::VectorXd lora_linear_forward(const LoraAdapter& adapter, const Eigen::VectorXd& x);

/// Per-dimension mean over the T rows of a T x 64 hidden state.
Embedding mean_pool(const Eigen::MatrixXd& hidden);

struct EncoderConfig {
  int context_length = 90;
  int d_model = 64;
  int n_layers = 4;
  std::uint64_t seed = 0;
  /// 0 disables the adapters on the channel-mixing layers.
  int lora_rank = 0;
  double lora_alpha = 32.0;
  /// Std of the initial up-projection; 0 keeps the adapters an exact no-op.
  double lora_up_init_std = 0.0;

  void validate() const;
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// Seeded stand-in backbone: input projection with positional offsets, then
/// n_layers of residual token-mixing and channel-mixing affine maps with GELU,
/// each behind a parameter-free row normalization. Weights are a pure
/// function of the config.
class MixerEncoder {
 public:
  explicit MixerEncoder(const EncoderConfig& config);

  [[nodiscard]] const EncoderConfig& config() const { return config_; }
  /// T x d_model hidden state of the final layer.
  [[nodiscard]] Eigen::MatrixXd hidden_states(std::span<const double> window) const;
  [[nodiscard]] Embedding forward(std::span<const double> window) const;

 private:
  struct Layer {
    Eigen::MatrixXd token_weight;  // T x T
    Eigen::VectorXd token_bias;    // T
    LoraAdapter channel;           // d x d
    Eigen::MatrixXd channel_weight_t;
    Eigen::RowVectorXd channel_bias;
  };

  EncoderConfig config_;
  Eigen::RowVectorXd input_weight_;
  Eigen::RowVectorXd input_bias_;
  Eigen::MatrixXd position_;
  std::vector<Layer> layers_;
};

Embedding encoder_forward(const EncoderConfig& config, std::span<const double> window);

/// Source of h_TS. The pipeline only ever talks to this interface.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  [[nodiscard]] virtual Embedding embed(const dataset::SampleWindow& window) const = 0;
};

/// Table loaded from the interchange file, keyed by sample_id.
class PrecomputedEmbeddings final : public EmbeddingProvider {
 public:
  PrecomputedEmbeddings() = default;
  explicit PrecomputedEmbeddings(std::unordered_map<std::string, Embedding> table) : table_(std::move(table)) {}

  /// Throws EmbeddingError naming the line of the first malformed record.
  static PrecomputedEmbeddings load(std::istream& in);
  static PrecomputedEmbeddings load(const std::filesystem::path& path);

  [[nodiscard]] Embedding embed(const dataset::SampleWindow& window) const override;
  /// Throws EmbeddingError for unknown ids.
  [[nodiscard]] const Embedding& lookup(const std::string& sample_id) const;
  [[nodiscard]] bool contains(const std::string& sample_id) const { return table_.contains(sample_id); }
  [[nodiscard]] std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, Embedding> table_;
};

class NativeEncoderProvider final : public EmbeddingProvider {
 public:
  explicit NativeEncoderProvider(const EncoderConfig& config) : encoder_(config) {}
  [[nodiscard]] Embedding embed(const dataset::SampleWindow& window) const override;
  [[nodiscard]] const MixerEncoder& encoder() const { return encoder_; }

 private:
  MixerEncoder encoder_;
};

/// One `{"sample_id": ..., "embedding": [64 numbers]}` record per line,
/// shortest round-trip decimal for every value.
void write_embeddings_jsonl(std::ostream& out, std::span<const std::pair<std::string, Embedding>> records);

}  // namespace hybridsentry::embedding
