#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace hybridsentry::eval {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  [[nodiscard]] std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// prob >= threshold predicts positive. Throws DataError on empty or mismatched input.
ConfusionCounts confusion_at(std::span<const std::uint8_t> labels, std::span<const double> probs,
                             double threshold = 0.5);

/// Any 0/0 ratio is reported as 0 with its `*_undefined` flag set.
struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  bool fpr_undefined = false;
};

ClassificationMetrics classification_metrics(const ConfusionCounts& counts);

/// Mann-Whitney statistic (wins + 0.5 ties) / (n_pos * n_neg) via one sort.
/// Throws DataError when only one class is present.
double roc_auc(std::span<const std::uint8_t> labels, std::span<const double> scores);

/// One point per distinct score, swept from high to low, preceded by the
/// empty-prediction origin. Precision at the origin is taken as 1.
struct CurvePoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

std::vector<CurvePoint> threshold_sweep(std::span<const std::uint8_t> labels, std::span<const double> scores);

/// Trapezoidal area under the (fpr, tpr) polyline.
double trapezoid_auc(std::span<const CurvePoint> curve);

/// Step-wise area under the precision-recall curve.
double average_precision(std::span<const CurvePoint> curve);

struct ConcentrationDiagnostic {
  double std = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  /// P95 - P5 of the predicted probabilities.
  double central_width = 0.0;
  bool flagged = false;
};

inline constexpr double kConcentrationWidth = 0.05;

/// Flags probability collapse: central 90% of the mass narrower than min_width.
ConcentrationDiagnostic concentration_diagnostic(std::span<const double> probs,
                                                 double min_width = kConcentrationWidth);

inline constexpr std::size_t kHistogramBins = 20;

struct EvalReport {
  int horizon = 0;
  double threshold = 0.5;
  std::uint64_t n_samples = 0;
  std::uint64_t n_positive = 0;
  ConfusionCounts counts;
  ClassificationMetrics metrics;
  std::optional<double> roc_auc;
  std::optional<double> average_precision;
  std::vector<CurvePoint> curve;
  std::array<std::uint64_t, kHistogramBins> probability_histogram{};
  ConcentrationDiagnostic concentration;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(int horizon, std::span<const std::uint8_t> labels, std::span<const double> probs,
                    double threshold = 0.5);

}  // namespace hybridsentry::eval
