#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace hybridsentry::gbdt {

struct TrainConfig {
  int n_rounds = 1000;
  double learning_rate = 0.05;
  int max_depth = 7;
  int max_leaves = 31;
  int min_samples_leaf = 20;
  double feature_fraction = 0.8;
  double bagging_fraction = 0.8;
  /// Positive-class weight. Unset means (#negatives / #positives) of the training rows.
  std::optional<double> pos_weight;
  int n_bins = 255;
  double lambda_l2 = 0.0;
  /// Rounds without a validation ROC-AUC improvement before stopping; 0 disables.
  int early_stop_patience = 50;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is outside its documented range.
  void validate() const;
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Dense row-major matrix of raw feature values.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows(rows), cols(cols), values(rows * cols, 0.0) {}

  [[nodiscard]] std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  [[nodiscard]] std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  void push_row(std::span<const double> row);
};

/// Per-sample first and second derivatives of the weighted logistic loss.
struct GradHessBuffer {
  std::vector<double> grad;
  std::vector<double> hess;
};

/// log(sum of positive weights / sum of negative weights), each sum clamped at 1e-12.
double init_score(std::span<const std::uint8_t> labels, std::span<const double> weights);

/// g = w (p - y), h = w p (1 - p).
GradHessBuffer compute_grad_hess(std::span<const std::uint8_t> labels, std::span<const double> probs,
                                 std::span<const double> weights);

double sigmoid(double score);

/// Row-major bin indices, one byte per cell.
struct BinnedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bins;

  [[nodiscard]] const std::uint8_t* row(std::size_t i) const { return bins.data() + i * cols; }
  [[nodiscard]] std::uint8_t at(std::size_t i, std::size_t j) const { return bins[i * cols + j]; }
};

/// Equal-frequency bin boundaries per feature, fit on training rows only.
/// A value lands in the first bin whose upper edge is >= the value; values
/// past the last finite edge fall into the last bin.
class BinMapper {
 public:
  static constexpr int kMaxBins = 256;

  BinMapper() = default;
  explicit BinMapper(std::vector<std::vector<double>> edges) : edges_(std::move(edges)) {}

  static BinMapper fit(const FeatureMatrix& train, int n_bins);

  [[nodiscard]] std::size_t num_features() const { return edges_.size(); }
  [[nodiscard]] std::size_t num_bins(std::size_t feature) const { return edges_[feature].size() + 1; }
  /// Finite upper edges; bin b covers (edges[b-1], edges[b]].
  [[nodiscard]] const std::vector<double>& edges(std::size_t feature) const { return edges_[feature]; }
  [[nodiscard]] std::uint8_t bin(std::size_t feature, double value) const;
  [[nodiscard]] BinnedMatrix transform(const FeatureMatrix& matrix) const;

 private:
  std::vector<std::vector<double>> edges_;
};

std::pair<BinnedMatrix, BinMapper> bin_features(const FeatureMatrix& matrix, int n_bins = 255);

struct HistBin {
  double grad = 0.0;
  double hess = 0.0;
  std::uint32_t count = 0;
};

/// (sum g, sum h, count) per bin for every feature of one node.
class Histogram {
 public:
  explicit Histogram(const BinMapper& mapper);

  void add(const std::uint8_t* row_bins, std::span<const int> features, double g, double h);
  /// this -= other, for the listed features (parent minus sibling).
  void subtract(const Histogram& other, std::span<const int> features);

  [[nodiscard]] std::span<const HistBin> feature(std::size_t f) const;
  [[nodiscard]] std::span<HistBin> feature(std::size_t f);

 private:
  std::vector<std::size_t> offsets_;
  std::vector<HistBin> bins_;
};

struct SplitParams {
  int min_samples_leaf = 20;
  double lambda_l2 = 0.0;
  /// Floor on each child's hessian sum; keeps leaf values finite when
  /// probabilities saturate.
  double min_child_hessian = 1e-3;
};

struct SplitCandidate {
  int feature = -1;
  int bin = -1;
  double gain = 0.0;
};

/// gain = GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l). Scans features in the given
/// order (ascending index expected) and bins ascending; only a strictly
/// larger gain replaces the incumbent. nullopt when no positive gain passes
/// the min-leaf constraint.
std::optional<SplitCandidate> find_best_split(const Histogram& hist, std::span<const int> features,
                                              const SplitParams& params);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  int bin = 0;
  double threshold = 0.0;  // raw-value form of `bin`: x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output with shrinkage applied
  double gain = 0.0;
  std::uint32_t count = 0;  // in-bag training rows reaching the node
  int depth = 0;

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  [[nodiscard]] const std::vector<TreeNode>& nodes() const { return nodes_; }
  [[nodiscard]] int leaf_count() const;
  [[nodiscard]] int depth() const;
  [[nodiscard]] double predict(std::span<const double> raw) const;
  [[nodiscard]] double predict_binned(const std::uint8_t* row_bins) const;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  std::vector<TreeNode> nodes_;
};

/// Best-first growth over the given in-bag rows and candidate features.
/// Leaf value = -G/(H + lambda) * learning_rate.
DecisionTree grow_tree(const BinnedMatrix& data, const BinMapper& mapper, const GradHessBuffer& grad_hess,
                       const TrainConfig& config, std::span<const std::uint32_t> rows,
                       std::span<const int> features);

struct FeatureImportance {
  std::string name;
  std::uint64_t splits = 0;
  double share = 0.0;
};

class BoostedEnsemble {
 public:
  double init_score = 0.0;
  std::vector<DecisionTree> trees;
  BinMapper bins;
  std::vector<std::string> feature_names;
  /// Number of leading trees used at prediction time.
  std::size_t best_iteration = 0;
  std::optional<double> best_valid_auc;
  TrainConfig config;
  /// Free-form attachments (feature groups, standardizer, horizon, ...).
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  [[nodiscard]] double raw_score(std::span<const double> x) const;
  /// sigmoid(raw_score) clamped to [1e-15, 1 - 1e-15]. Throws DataError on a length mismatch.
  [[nodiscard]] double predict_proba(std::span<const double> x) const;
  /// Internal-node split counts per feature over trees[0, best_iteration).
  [[nodiscard]] std::vector<std::uint64_t> split_counts() const;
  /// Split share per feature; empty for an init-only model.
  [[nodiscard]] std::vector<FeatureImportance> feature_importance() const;
  [[nodiscard]] std::string manifest_hash() const;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  /// Throws DataError when the stored manifest hash does not match the stored names.
  static BoostedEnsemble from_json(const nlohmann::json& j);
};

std::string manifest_hash(std::span<const std::string> feature_names);

enum class FitStatus { kOk, kSingleClass, kNoValidation };

struct FitResult {
  BoostedEnsemble model;
  FitStatus status = FitStatus::kOk;
  /// Weighted mean training logloss after each round (index 0 = init score only).
  std::vector<double> train_loss;
  /// Validation ROC-AUC after each round, when defined.
  std::vector<double> valid_auc;
};

const char* to_string(FitStatus status);

/// Boosting loop. Training rows are put into a canonical (content-sorted)
/// order first, so the result does not depend on input row order. Per round
/// the RNG is consumed for feature sampling and then row bagging, each only
/// when its fraction is below 1. With an empty validation set or one lacking
/// either class, early stopping is off and every tree is used.
FitResult fit(const FeatureMatrix& train_x, std::span<const std::uint8_t> train_y, const FeatureMatrix& valid_x,
              std::span<const std::uint8_t> valid_y, const TrainConfig& config,
              std::vector<std::string> feature_names);

/// Sum of w_i * logloss_i / sum of w_i.
double weighted_logloss(std::span<const std::uint8_t> labels, std::span<const double> probs,
                        std::span<const double> weights);

}  // namespace hybridsentry::gbdt
