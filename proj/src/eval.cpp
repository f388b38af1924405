#include "hybridsentry/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hybridsentry/common.hpp"
#include "hybridsentry/numeric.hpp"

namespace hybridsentry::eval {

namespace {

void check_inputs(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  if (labels.empty()) throw DataError("evaluation input is empty");
  if (labels.size() != scores.size()) throw DataError("labels and scores differ in length");
}

/// Indices sorted by descending score; ties keep index order.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion_at(std::span<const std::uint8_t> labels, std::span<const double> probs, double threshold) {
  check_inputs(labels, probs);
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    if (labels[i] != 0) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
  ClassificationMetrics m;
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
  m.fpr = ratio(c.fp, c.fp + c.tn, m.fpr_undefined);
  const double denom = m.precision + m.recall;
  m.f1_undefined = denom == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / denom;
  return m;
}

double roc_auc(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  check_inputs(labels, scores);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score order; every positive beats all
  // negatives seen in earlier groups and half-ties with its own group.
  double wins = 0.0;
  std::uint64_t neg_below = 0, n_pos = 0, n_neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t pos_group = 0, neg_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      labels[order[j]] != 0 ? ++pos_group : ++neg_group;
      ++j;
    }
    wins += static_cast<double>(pos_group * neg_below) + 0.5 * static_cast<double>(pos_group * neg_group);
    neg_below += neg_group;
    n_pos += pos_group;
    n_neg += neg_group;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw DataError("ROC-AUC is undefined with a single class");
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<CurvePoint> threshold_sweep(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  check_inputs(labels, scores);
  const auto n_pos = static_cast<std::uint64_t>(std::count_if(labels.begin(), labels.end(), [](auto y) { return y != 0; }));
  const std::uint64_t n_neg = labels.size() - n_pos;
  const auto order = descending_order(scores);

  std::vector<CurvePoint> curve;
  CurvePoint origin;
  origin.threshold = std::nextafter(scores[order.front()], std::numeric_limits<double>::max());
  curve.push_back(origin);

  std::uint64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double tau = scores[order[i]];
    while (i < order.size() && scores[order[i]] == tau) {
      labels[order[i]] != 0 ? ++tp : ++fp;
      ++i;
    }
    CurvePoint p;
    p.threshold = tau;
    p.tpr = n_pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(n_pos);
    p.fpr = n_neg == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(n_neg);
    p.recall = p.tpr;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    curve.push_back(p);
  }
  return curve;
}

double trapezoid_auc(std::span<const CurvePoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

double average_precision(std::span<const CurvePoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].recall - curve[i - 1].recall) * curve[i].precision;
  }
  return area;
}

ConcentrationDiagnostic concentration_diagnostic(std::span<const double> probs, double min_width) {
  if (probs.empty()) throw DataError("concentration diagnostic needs at least one probability");
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end());
  ConcentrationDiagnostic d;
  d.std = sorted.front() == sorted.back() ? 0.0 : numeric::population_std(probs);
  d.p5 = numeric::percentile_sorted(sorted, 0.05);
  d.p95 = numeric::percentile_sorted(sorted, 0.95);
  d.central_width = d.p95 - d.p5;
  d.flagged = d.central_width < min_width;
  return d;
}

EvalReport evaluate(int horizon, std::span<const std::uint8_t> labels, std::span<const double> probs,
                    double threshold) {
  check_inputs(labels, probs);
  EvalReport r;
  r.horizon = horizon;
  r.threshold = threshold;
  r.n_samples = labels.size();
  r.n_positive = static_cast<std::uint64_t>(std::count_if(labels.begin(), labels.end(), [](auto y) { return y != 0; }));
  r.counts = confusion_at(labels, probs, threshold);
  r.metrics = classification_metrics(r.counts);
  r.curve = threshold_sweep(labels, probs);
  if (r.n_positive > 0 && r.n_positive < r.n_samples) {
    r.roc_auc = roc_auc(labels, probs);
    r.average_precision = average_precision(r.curve);
  }
  for (const double p : probs) {
    const auto bin = static_cast<std::size_t>(std::clamp(std::floor(p * static_cast<double>(kHistogramBins)), 0.0,
                                                         static_cast<double>(kHistogramBins - 1)));
    ++r.probability_histogram[bin];
  }
  r.concentration = concentration_diagnostic(probs);
  return r;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["horizon"] = horizon;
  j["threshold"] = threshold;
  j["n_samples"] = n_samples;
  j["n_positive"] = n_positive;
  j["confusion"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
  j["precision"] = metrics.precision;
  j["recall"] = metrics.recall;
  j["f1"] = metrics.f1;
  j["fpr"] = metrics.fpr;
  j["undefined"] = {{"precision", metrics.precision_undefined},
                    {"recall", metrics.recall_undefined},
                    {"f1", metrics.f1_undefined},
                    {"fpr", metrics.fpr_undefined}};
  j["roc_auc"] = roc_auc ? nlohmann::ordered_json(*roc_auc) : nlohmann::ordered_json(nullptr);
  j["average_precision"] =
      average_precision ? nlohmann::ordered_json(*average_precision) : nlohmann::ordered_json(nullptr);

  std::vector<double> thresholds, fprs, tprs, precisions, recalls;
  for (const auto& p : curve) {
    thresholds.push_back(p.threshold);
    fprs.push_back(p.fpr);
    tprs.push_back(p.tpr);
    precisions.push_back(p.precision);
    recalls.push_back(p.recall);
  }
  j["roc_curve"] = {{"threshold", thresholds}, {"fpr", fprs}, {"tpr", tprs}};
  j["pr_curve"] = {{"threshold", thresholds}, {"precision", precisions}, {"recall", recalls}};
  j["probability_histogram"] = {{"bins", kHistogramBins}, {"counts", probability_histogram}};
  j["probability_std"] = concentration.std;
  j["concentration"] = {{"std", concentration.std},
                        {"p5", concentration.p5},
                        {"p95", concentration.p95},
                        {"central_width", concentration.central_width},
                        {"min_width", kConcentrationWidth},
                        {"flagged", concentration.flagged}};
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.horizon = j.at("horizon").get<int>();
  r.threshold = j.at("threshold").get<double>();
  r.n_samples = j.at("n_samples").get<std::uint64_t>();
  r.n_positive = j.at("n_positive").get<std::uint64_t>();
  const auto& c = j.at("confusion");
  r.counts = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
              c.at("tn").get<std::uint64_t>()};
  r.metrics.precision = j.at("precision").get<double>();
  r.metrics.recall = j.at("recall").get<double>();
  r.metrics.f1 = j.at("f1").get<double>();
  r.metrics.fpr = j.at("fpr").get<double>();
  const auto& u = j.at("undefined");
  r.metrics.precision_undefined = u.at("precision").get<bool>();
  r.metrics.recall_undefined = u.at("recall").get<bool>();
  r.metrics.f1_undefined = u.at("f1").get<bool>();
  r.metrics.fpr_undefined = u.at("fpr").get<bool>();
  if (!j.at("roc_auc").is_null()) r.roc_auc = j.at("roc_auc").get<double>();
  if (!j.at("average_precision").is_null()) r.average_precision = j.at("average_precision").get<double>();
  const auto& roc = j.at("roc_curve");
  const auto& pr = j.at("pr_curve");
  const auto thresholds = roc.at("threshold").get<std::vector<double>>();
  const auto fprs = roc.at("fpr").get<std::vector<double>>();
  const auto tprs = roc.at("tpr").get<std::vector<double>>();
  const auto precisions = pr.at("precision").get<std::vector<double>>();
  const auto recalls = pr.at("recall").get<std::vector<double>>();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    r.curve.push_back({thresholds[i], fprs.at(i), tprs.at(i), precisions.at(i), recalls.at(i)});
  }
  const auto counts = j.at("probability_histogram").at("counts").get<std::vector<std::uint64_t>>();
  if (counts.size() != kHistogramBins) throw DataError("probability histogram must have 20 bins");
  std::copy(counts.begin(), counts.end(), r.probability_histogram.begin());
  const auto& d = j.at("concentration");
  r.concentration = {d.at("std").get<double>(), d.at("p5").get<double>(), d.at("p95").get<double>(),
                     d.at("central_width").get<double>(), d.at("flagged").get<bool>()};
  return r;
}

}  // namespace hybridsentry::eval
