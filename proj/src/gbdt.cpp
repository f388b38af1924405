#include "hybridsentry/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hybridsentry/common.hpp"
#include "hybridsentry/eval.hpp"

namespace hybridsentry::gbdt {

namespace {

constexpr double kProbFloor = 1e-15;
constexpr double kWeightFloor = 1e-12;
constexpr const char* kFormat = "hybridsentry-gbdt/1";

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

/// First `k` entries of a partial Fisher-Yates shuffle of [0, n), sorted.
template <typename T>
std::vector<T> sample_sorted(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<T> pool(n);
  std::iota(pool.begin(), pool.end(), T{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::size_t fraction_count(double fraction, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

struct NodeSums {
  double grad = 0.0;
  double hess = 0.0;
};

double leaf_value(const NodeSums& s, const TrainConfig& config) {
  const double denom = s.hess + config.lambda_l2;
  return denom > 0.0 ? -s.grad / denom * config.learning_rate : 0.0;
}

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (n_rounds < 0) throw ConfigError("n_rounds must be >= 0");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("learning_rate must be in (0, 1]");
  if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (max_leaves < 2) throw ConfigError("max_leaves must be >= 2");
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) throw ConfigError("feature_fraction must be in (0, 1]");
  if (!(bagging_fraction > 0.0 && bagging_fraction <= 1.0)) throw ConfigError("bagging_fraction must be in (0, 1]");
  if (pos_weight && !(*pos_weight > 0.0 && std::isfinite(*pos_weight))) throw ConfigError("pos_weight must be > 0");
  if (n_bins < 2 || n_bins > BinMapper::kMaxBins) throw ConfigError("n_bins must be in [2, 256]");
  if (!(lambda_l2 >= 0.0)) throw ConfigError("lambda_l2 must be >= 0");
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_rounds"] = n_rounds;
  j["learning_rate"] = learning_rate;
  j["max_depth"] = max_depth;
  j["max_leaves"] = max_leaves;
  j["min_samples_leaf"] = min_samples_leaf;
  j["feature_fraction"] = feature_fraction;
  j["bagging_fraction"] = bagging_fraction;
  j["pos_weight"] = pos_weight ? nlohmann::ordered_json(*pos_weight) : nlohmann::ordered_json(nullptr);
  j["n_bins"] = n_bins;
  j["lambda_l2"] = lambda_l2;
  j["early_stop_patience"] = early_stop_patience;
  j["seed"] = seed;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"n_rounds",         "learning_rate",    "max_depth",
                                                 "max_leaves",       "min_samples_leaf", "feature_fraction",
                                                 "bagging_fraction", "pos_weight",       "n_bins",
                                                 "lambda_l2",        "early_stop_patience", "seed"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown train config key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    c.n_rounds = j.value("n_rounds", c.n_rounds);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.max_leaves = j.value("max_leaves", c.max_leaves);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.feature_fraction = j.value("feature_fraction", c.feature_fraction);
    c.bagging_fraction = j.value("bagging_fraction", c.bagging_fraction);
    if (j.contains("pos_weight") && !j.at("pos_weight").is_null()) c.pos_weight = j.at("pos_weight").get<double>();
    c.n_bins = j.value("n_bins", c.n_bins);
    c.lambda_l2 = j.value("lambda_l2", c.lambda_l2);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- loss

void FeatureMatrix::push_row(std::span<const double> row) {
  if (rows == 0 && values.empty()) cols = row.size();
  if (row.size() != cols) throw DataError(fmt::format("row has {} values, expected {}", row.size(), cols));
  values.insert(values.end(), row.begin(), row.end());
  ++rows;
}

double init_score(std::span<const std::uint8_t> labels, std::span<const double> weights) {
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] != 0 ? pos : neg) += weights[i];
  return std::log(std::max(pos, kWeightFloor) / std::max(neg, kWeightFloor));
}

GradHessBuffer compute_grad_hess(std::span<const std::uint8_t> labels, std::span<const double> probs,
                                 std::span<const double> weights) {
  GradHessBuffer out;
  out.grad.resize(labels.size());
  out.hess.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i] != 0 ? 1.0 : 0.0;
    out.grad[i] = weights[i] * (probs[i] - y);
    out.hess[i] = weights[i] * probs[i] * (1.0 - probs[i]);
  }
  return out;
}

double sigmoid(double score) {
  if (score >= 0.0) return 1.0 / (1.0 + std::exp(-score));
  const double e = std::exp(score);
  return e / (1.0 + e);
}

double weighted_logloss(std::span<const std::uint8_t> labels, std::span<const double> probs,
                        std::span<const double> weights) {
  double total = 0.0, weight = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    total += weights[i] * -(labels[i] != 0 ? std::log(p) : std::log1p(-p));
    weight += weights[i];
  }
  return weight > 0.0 ? total / weight : 0.0;
}

// ---------------------------------------------------------------- binning

BinMapper BinMapper::fit(const FeatureMatrix& train, int n_bins) {
  if (train.rows == 0) throw DataError("cannot fit bins on an empty matrix");
  if (n_bins < 2 || n_bins > kMaxBins) throw ConfigError("n_bins must be in [2, 256]");
  std::vector<std::vector<double>> edges(train.cols);
  std::vector<double> column(train.rows);
  for (std::size_t f = 0; f < train.cols; ++f) {
    for (std::size_t i = 0; i < train.rows; ++i) {
      column[i] = train.at(i, f);
      if (!std::isfinite(column[i])) throw DataError(fmt::format("feature {} has a non-finite value", f));
    }
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    auto& e = edges[f];
    auto midpoint = [](double lo, double hi) {
      const double m = lo + (hi - lo) / 2.0;
      return m < hi ? m : lo;
    };
    const auto distinct = static_cast<std::size_t>(
        std::distance(column.begin(), std::unique(column.begin(), column.end())));
    if (distinct <= static_cast<std::size_t>(n_bins)) {
      for (std::size_t i = 0; i + 1 < distinct; ++i) e.push_back(midpoint(column[i], column[i + 1]));
      continue;
    }
    // unique() left the tail unspecified; restore the full sorted column.
    for (std::size_t i = 0; i < train.rows; ++i) column[i] = train.at(i, f);
    std::sort(column.begin(), column.end());
    for (int k = 1; k < n_bins; ++k) {
      const std::size_t pos = std::max<std::size_t>(1, static_cast<std::size_t>(k) * n / static_cast<std::size_t>(n_bins));
      const double lo = column[pos - 1];
      const auto next = std::upper_bound(column.begin(), column.end(), lo);
      if (next == column.end()) break;
      const double edge = midpoint(lo, *next);
      if (e.empty() || edge > e.back()) e.push_back(edge);
    }
    if (e.size() + 1 > static_cast<std::size_t>(n_bins)) e.resize(static_cast<std::size_t>(n_bins) - 1);
  }
  return BinMapper(std::move(edges));
}

std::uint8_t BinMapper::bin(std::size_t feature, double value) const {
  const auto& e = edges_[feature];
  return static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), value) - e.begin());
}

BinnedMatrix BinMapper::transform(const FeatureMatrix& matrix) const {
  if (matrix.cols != edges_.size()) {
    throw DataError(fmt::format("matrix has {} features, bins fit on {}", matrix.cols, edges_.size()));
  }
  BinnedMatrix out;
  out.rows = matrix.rows;
  out.cols = matrix.cols;
  out.bins.resize(matrix.rows * matrix.cols);
  for (std::size_t i = 0; i < matrix.rows; ++i) {
    for (std::size_t f = 0; f < matrix.cols; ++f) out.bins[i * matrix.cols + f] = bin(f, matrix.at(i, f));
  }
  return out;
}

std::pair<BinnedMatrix, BinMapper> bin_features(const FeatureMatrix& matrix, int n_bins) {
  BinMapper mapper = BinMapper::fit(matrix, n_bins);
  BinnedMatrix binned = mapper.transform(matrix);
  return {std::move(binned), std::move(mapper)};
}

// ---------------------------------------------------------------- histogram

Histogram::Histogram(const BinMapper& mapper) {
  offsets_.resize(mapper.num_features() + 1, 0);
  for (std::size_t f = 0; f < mapper.num_features(); ++f) offsets_[f + 1] = offsets_[f] + mapper.num_bins(f);
  bins_.resize(offsets_.back());
}

void Histogram::add(const std::uint8_t* row_bins, std::span<const int> features, double g, double h) {
  for (const int f : features) {
    HistBin& b = bins_[offsets_[static_cast<std::size_t>(f)] + row_bins[f]];
    b.grad += g;
    b.hess += h;
    ++b.count;
  }
}

void Histogram::subtract(const Histogram& other, std::span<const int> features) {
  for (const int f : features) {
    const auto fi = static_cast<std::size_t>(f);
    for (std::size_t k = offsets_[fi]; k < offsets_[fi + 1]; ++k) {
      bins_[k].grad -= other.bins_[k].grad;
      bins_[k].hess -= other.bins_[k].hess;
      bins_[k].count -= other.bins_[k].count;
    }
  }
}

std::span<const HistBin> Histogram::feature(std::size_t f) const {
  return {bins_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]};
}

std::span<HistBin> Histogram::feature(std::size_t f) {
  return {bins_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]};
}

std::optional<SplitCandidate> find_best_split(const Histogram& hist, std::span<const int> features,
                                              const SplitParams& params) {
  std::optional<SplitCandidate> best;
  double best_gain = 0.0;
  const double lambda = params.lambda_l2;
  const auto min_leaf = static_cast<std::uint64_t>(std::max(params.min_samples_leaf, 1));
  for (const int f : features) {
    const auto bins = hist.feature(static_cast<std::size_t>(f));
    double g_total = 0.0, h_total = 0.0;
    std::uint64_t c_total = 0;
    for (const HistBin& b : bins) {
      g_total += b.grad;
      h_total += b.hess;
      c_total += b.count;
    }
    const double parent = g_total * g_total / (h_total + lambda);
    double gl = 0.0, hl = 0.0;
    std::uint64_t cl = 0;
    for (std::size_t b = 0; b + 1 < bins.size(); ++b) {
      gl += bins[b].grad;
      hl += bins[b].hess;
      cl += bins[b].count;
      if (bins[b].count == 0 || cl < min_leaf) continue;
      const std::uint64_t cr = c_total - cl;
      if (cr < min_leaf) break;
      const double gr = g_total - gl;
      const double hr = h_total - hl;
      if (hl < params.min_child_hessian || hr < params.min_child_hessian) continue;
      const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
      if (gain > best_gain) {
        best_gain = gain;
        best = SplitCandidate{f, static_cast<int>(b), gain};
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------- tree

int DecisionTree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int DecisionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

double DecisionTree::predict(std::span<const double> raw) const {
  if (nodes_.empty()) return 0.0;
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(raw[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

double DecisionTree::predict_binned(const std::uint8_t* row_bins) const {
  if (nodes_.empty()) return 0.0;
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(row_bins[n.feature] <= n.bin ? n.left : n.right);
  }
  return nodes_[i].value;
}

namespace {

nlohmann::ordered_json node_to_json(const std::vector<TreeNode>& nodes, std::size_t i) {
  const TreeNode& n = nodes[i];
  nlohmann::ordered_json j;
  if (n.is_leaf()) {
    j["leaf"] = n.value;
    j["count"] = n.count;
    return j;
  }
  j["feature"] = n.feature;
  j["bin"] = n.bin;
  j["threshold"] = n.threshold;
  j["gain"] = n.gain;
  j["count"] = n.count;
  j["left"] = node_to_json(nodes, static_cast<std::size_t>(n.left));
  j["right"] = node_to_json(nodes, static_cast<std::size_t>(n.right));
  return j;
}

int node_from_json(const nlohmann::json& j, int depth, std::vector<TreeNode>& nodes) {
  const int index = static_cast<int>(nodes.size());
  nodes.emplace_back();
  TreeNode n;
  n.depth = depth;
  n.count = j.at("count").get<std::uint32_t>();
  if (j.contains("leaf")) {
    n.value = j.at("leaf").get<double>();
  } else {
    n.feature = j.at("feature").get<int>();
    if (n.feature < 0) throw DataError("tree node has a negative feature index");
    n.bin = j.at("bin").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.gain = j.at("gain").get<double>();
    n.left = node_from_json(j.at("left"), depth + 1, nodes);
    n.right = node_from_json(j.at("right"), depth + 1, nodes);
  }
  nodes[static_cast<std::size_t>(index)] = n;
  return index;
}

}  // namespace

nlohmann::ordered_json DecisionTree::to_json() const {
  if (nodes_.empty()) return nullptr;
  return node_to_json(nodes_, 0);
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  std::vector<TreeNode> nodes;
  if (!j.is_null()) node_from_json(j, 0, nodes);
  return DecisionTree(std::move(nodes));
}

DecisionTree grow_tree(const BinnedMatrix& data, const BinMapper& mapper, const GradHessBuffer& grad_hess,
                       const TrainConfig& config, std::span<const std::uint32_t> rows,
                       std::span<const int> features) {
  struct OpenLeaf {
    int node;
    std::vector<std::uint32_t> rows;
    Histogram hist;
    std::optional<SplitCandidate> split;
  };

  const SplitParams params{config.min_samples_leaf, config.lambda_l2};
  const auto min_leaf = static_cast<std::size_t>(config.min_samples_leaf);
  std::vector<TreeNode> nodes;

  auto sums_of = [&](std::span<const std::uint32_t> rs) {
    NodeSums s;
    for (const auto r : rs) {
      s.grad += grad_hess.grad[r];
      s.hess += grad_hess.hess[r];
    }
    return s;
  };
  auto build_hist = [&](std::span<const std::uint32_t> rs) {
    Histogram h(mapper);
    for (const auto r : rs) h.add(data.row(r), features, grad_hess.grad[r], grad_hess.hess[r]);
    return h;
  };
  auto make_node = [&](std::span<const std::uint32_t> rs, int depth) {
    TreeNode n;
    n.depth = depth;
    n.count = static_cast<std::uint32_t>(rs.size());
    n.value = leaf_value(sums_of(rs), config);
    nodes.push_back(n);
    return static_cast<int>(nodes.size() - 1);
  };
  auto splittable = [&](const TreeNode& n) {
    return n.depth < config.max_depth && n.count >= 2 * min_leaf;
  };

  std::vector<OpenLeaf> open;
  {
    std::vector<std::uint32_t> root_rows(rows.begin(), rows.end());
    const int root = make_node(root_rows, 0);
    Histogram hist = build_hist(root_rows);
    std::optional<SplitCandidate> split;
    if (splittable(nodes[0])) split = find_best_split(hist, features, params);
    open.push_back({root, std::move(root_rows), std::move(hist), split});
  }

  int leaves = 1;
  while (leaves < config.max_leaves) {
    // Highest gain first; equal gains keep the earliest-created leaf.
    std::size_t pick = open.size();
    for (std::size_t i = 0; i < open.size(); ++i) {
      if (!open[i].split) continue;
      if (pick == open.size() || open[i].split->gain > open[pick].split->gain) pick = i;
    }
    if (pick == open.size()) break;

    OpenLeaf parent = std::move(open[pick]);
    open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
    const SplitCandidate s = *parent.split;
    const auto f = static_cast<std::size_t>(s.feature);

    std::vector<std::uint32_t> left_rows, right_rows;
    for (const auto r : parent.rows) (data.at(r, f) <= s.bin ? left_rows : right_rows).push_back(r);

    const int depth = nodes[static_cast<std::size_t>(parent.node)].depth + 1;
    const int left = make_node(left_rows, depth);
    const int right = make_node(right_rows, depth);
    TreeNode& pn = nodes[static_cast<std::size_t>(parent.node)];
    pn.feature = s.feature;
    pn.bin = s.bin;
    pn.threshold = mapper.edges(f)[static_cast<std::size_t>(s.bin)];
    pn.gain = s.gain;
    pn.left = left;
    pn.right = right;
    pn.value = 0.0;

    const bool left_small = left_rows.size() <= right_rows.size();
    Histogram small = build_hist(left_small ? left_rows : right_rows);
    Histogram large = std::move(parent.hist);
    large.subtract(small, features);

    OpenLeaf l{left, std::move(left_rows), left_small ? std::move(small) : std::move(large), std::nullopt};
    OpenLeaf r{right, std::move(right_rows), left_small ? std::move(large) : std::move(small), std::nullopt};
    if (splittable(nodes[static_cast<std::size_t>(left)])) l.split = find_best_split(l.hist, features, params);
    if (splittable(nodes[static_cast<std::size_t>(right)])) r.split = find_best_split(r.hist, features, params);
    open.push_back(std::move(l));
    open.push_back(std::move(r));
    ++leaves;
  }
  return DecisionTree(std::move(nodes));
}

// ---------------------------------------------------------------- ensemble

std::string manifest_hash(std::span<const std::string> feature_names) {
  std::uint64_t h = fnv1a("");
  for (const auto& name : feature_names) {
    h = fnv1a(name, h);
    h = fnv1a(std::string_view("\n", 1), h);
  }
  return hex64(h);
}

std::string BoostedEnsemble::manifest_hash() const { return gbdt::manifest_hash(feature_names); }

double BoostedEnsemble::raw_score(std::span<const double> x) const {
  if (x.size() != feature_names.size()) {
    throw DataError(fmt::format("feature vector has {} values, model expects {}", x.size(), feature_names.size()));
  }
  double s = init_score;
  const std::size_t used = std::min(best_iteration, trees.size());
  for (std::size_t t = 0; t < used; ++t) s += trees[t].predict(x);
  return s;
}

double BoostedEnsemble::predict_proba(std::span<const double> x) const { return clamp_prob(sigmoid(raw_score(x))); }

std::vector<std::uint64_t> BoostedEnsemble::split_counts() const {
  std::vector<std::uint64_t> counts(feature_names.size(), 0);
  const std::size_t used = std::min(best_iteration, trees.size());
  for (std::size_t t = 0; t < used; ++t) {
    for (const auto& n : trees[t].nodes()) {
      if (!n.is_leaf()) ++counts.at(static_cast<std::size_t>(n.feature));
    }
  }
  return counts;
}

std::vector<FeatureImportance> BoostedEnsemble::feature_importance() const {
  const auto counts = split_counts();
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  std::vector<FeatureImportance> out;
  if (total == 0) return out;
  for (std::size_t f = 0; f < counts.size(); ++f) {
    out.push_back({feature_names[f], counts[f], static_cast<double>(counts[f]) / static_cast<double>(total)});
  }
  return out;
}

nlohmann::ordered_json BoostedEnsemble::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["objective"] = "binary_logistic";
  j["config"] = config.to_json();
  j["feature_names"] = feature_names;
  j["manifest_hash"] = manifest_hash();
  j["init_score"] = init_score;
  j["best_iteration"] = best_iteration;
  j["best_valid_auc"] = best_valid_auc ? nlohmann::ordered_json(*best_valid_auc) : nlohmann::ordered_json(nullptr);
  j["num_trees"] = trees.size();
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < bins.num_features(); ++f) edges.push_back(bins.edges(f));
  j["bin_edges"] = std::move(edges);
  j["split_counts"] = split_counts();
  j["metadata"] = metadata;
  nlohmann::ordered_json ts = nlohmann::ordered_json::array();
  for (const auto& t : trees) ts.push_back(t.to_json());
  j["trees"] = std::move(ts);
  return j;
}

BoostedEnsemble BoostedEnsemble::from_json(const nlohmann::json& j) {
  BoostedEnsemble m;
  try {
    if (j.at("format").get<std::string>() != kFormat) throw DataError("unsupported model format");
    m.config = TrainConfig::from_json(j.at("config"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto stored = j.at("manifest_hash").get<std::string>();
    if (stored != m.manifest_hash()) {
      throw DataError("model manifest hash " + stored + " does not match its feature names (" + m.manifest_hash() +
                      ")");
    }
    m.init_score = j.at("init_score").get<double>();
    m.best_iteration = j.at("best_iteration").get<std::size_t>();
    if (!j.at("best_valid_auc").is_null()) m.best_valid_auc = j.at("best_valid_auc").get<double>();
    auto edges = j.at("bin_edges").get<std::vector<std::vector<double>>>();
    if (edges.size() != m.feature_names.size()) throw DataError("model bin edges do not match its feature count");
    m.bins = BinMapper(std::move(edges));
    if (j.contains("metadata")) m.metadata = j.at("metadata");
    for (const auto& t : j.at("trees")) m.trees.push_back(DecisionTree::from_json(t));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
  if (m.best_iteration > m.trees.size()) throw DataError("model best_iteration exceeds its tree count");
  for (const auto& t : m.trees) {
    for (const auto& n : t.nodes()) {
      if (!n.is_leaf() && static_cast<std::size_t>(n.feature) >= m.feature_names.size()) {
        throw DataError("model tree references an unknown feature");
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------- fit

const char* to_string(FitStatus status) {
  switch (status) {
    case FitStatus::kOk: return "ok";
    case FitStatus::kSingleClass: return "single_class";
    case FitStatus::kNoValidation: return "no_validation";
  }
  return "unknown";
}

FitResult fit(const FeatureMatrix& train_x, std::span<const std::uint8_t> train_y, const FeatureMatrix& valid_x,
              std::span<const std::uint8_t> valid_y, const TrainConfig& config,
              std::vector<std::string> feature_names) {
  config.validate();
  if (train_x.rows == 0) throw DataError("training set is empty");
  if (train_x.rows != train_y.size()) throw DataError("training rows and labels differ in length");
  if (valid_x.rows != valid_y.size()) throw DataError("validation rows and labels differ in length");
  if (valid_x.rows > 0 && valid_x.cols != train_x.cols) throw DataError("validation and training widths differ");
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < train_x.cols; ++f) feature_names.push_back(fmt::format("f{}", f));
  }
  if (feature_names.size() != train_x.cols) throw DataError("feature names do not match the matrix width");

  const std::size_t n = train_x.rows;
  const std::size_t n_features = train_x.cols;

  // Canonical row order: lexicographic by (feature values, label).
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ra = train_x.row(a);
    const auto rb = train_x.row(b);
    const auto c = std::lexicographical_compare_three_way(ra.begin(), ra.end(), rb.begin(), rb.end(),
                                                          std::compare_weak_order_fallback);
    if (c != 0) return c < 0;
    return train_y[a] < train_y[b];
  });
  FeatureMatrix x(n, n_features);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = train_x.row(order[i]);
    std::copy(src.begin(), src.end(), x.row(i).begin());
    y[i] = train_y[order[i]] != 0 ? 1 : 0;
  }

  const auto n_pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
  const std::size_t n_neg = n - n_pos;
  const double w_pos = config.pos_weight.value_or(
      n_pos > 0 ? static_cast<double>(n_neg) / static_cast<double>(n_pos) : 1.0);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = y[i] != 0 ? w_pos : 1.0;

  FitResult result;
  BoostedEnsemble& model = result.model;
  model.config = config;
  model.feature_names = std::move(feature_names);
  model.bins = BinMapper::fit(x, config.n_bins);
  model.init_score = init_score(y, w);

  std::vector<double> score(n, model.init_score);
  std::vector<double> probs(n);
  auto refresh_probs = [&] {
    for (std::size_t i = 0; i < n; ++i) probs[i] = clamp_prob(sigmoid(score[i]));
  };
  refresh_probs();
  result.train_loss.push_back(weighted_logloss(y, probs, w));

  if (n_pos == 0 || n_neg == 0) {
    spdlog::warn("training labels hold a single class; returning the init-only model");
    result.status = FitStatus::kSingleClass;
    return result;
  }

  const BinnedMatrix binned = model.bins.transform(x);
  const bool have_valid = valid_x.rows > 0 && std::any_of(valid_y.begin(), valid_y.end(), [](auto v) { return v != 0; }) &&
                          std::any_of(valid_y.begin(), valid_y.end(), [](auto v) { return v == 0; });
  const bool early_stop = config.early_stop_patience > 0;
  if (early_stop && !have_valid) {
    spdlog::warn("validation set is empty or single-class; early stopping disabled");
    result.status = FitStatus::kNoValidation;
  }
  BinnedMatrix valid_binned;
  std::vector<double> valid_score;
  if (have_valid) {
    valid_binned = model.bins.transform(valid_x);
    valid_score.assign(valid_x.rows, model.init_score);
  }

  std::vector<int> all_features(n_features);
  std::iota(all_features.begin(), all_features.end(), 0);
  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0U);

  Rng rng(derive_seed(config.seed, "gbdt-fit"));
  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;

  for (int round = 0; round < config.n_rounds; ++round) {
    const GradHessBuffer gh = compute_grad_hess(y, probs, w);
    const std::vector<int> features = config.feature_fraction < 1.0
                                          ? sample_sorted<int>(n_features, fraction_count(config.feature_fraction, n_features), rng)
                                          : all_features;
    const std::vector<std::uint32_t> rows =
        config.bagging_fraction < 1.0 ? sample_sorted<std::uint32_t>(n, fraction_count(config.bagging_fraction, n), rng)
                                      : all_rows;

    DecisionTree tree = grow_tree(binned, model.bins, gh, config, rows, features);
    for (std::size_t i = 0; i < n; ++i) score[i] += tree.predict_binned(binned.row(i));
    refresh_probs();
    result.train_loss.push_back(weighted_logloss(y, probs, w));
    model.trees.push_back(std::move(tree));

    if (have_valid) {
      for (std::size_t i = 0; i < valid_score.size(); ++i) {
        valid_score[i] += model.trees.back().predict_binned(valid_binned.row(i));
      }
      const double auc = eval::roc_auc(valid_y, valid_score);
      result.valid_auc.push_back(auc);
      if (auc > best_auc) {
        best_auc = auc;
        best_round = model.trees.size();
      }
      if (early_stop && model.trees.size() - best_round >= static_cast<std::size_t>(config.early_stop_patience)) break;
    }
  }

  if (!result.valid_auc.empty()) model.best_valid_auc = best_auc;
  model.best_iteration = (have_valid && early_stop) ? best_round : model.trees.size();
  return result;
}

}  // namespace hybridsentry::gbdt
