#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "hybridsentry/eval.hpp"
#include "hybridsentry/gbdt.hpp"
#include "oracles.hpp"

using namespace hybridsentry;
using namespace hybridsentry::gbdt;

namespace {

struct Toy {
  FeatureMatrix x;
  std::vector<std::uint8_t> y;
};

// Two informative features plus noise columns, labels from a noisy linear rule.
Toy noisy_toy(Rng& rng, std::size_t n, std::size_t noise_cols = 2, double flip = 0.1) {
  Toy t{FeatureMatrix(n, 2 + noise_cols), std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    auto row = t.x.row(i);
    for (auto& v : row) v = rng.normal();
    const bool pos = row[0] + 0.5 * row[1] > 0.8;
    t.y[i] = (pos != (rng.uniform() < flip)) ? 1 : 0;
  }
  return t;
}

TrainConfig no_sampling() {
  TrainConfig c;
  c.feature_fraction = 1.0;
  c.bagging_fraction = 1.0;
  c.early_stop_patience = 0;
  return c;
}

}  // namespace

TEST_CASE("init score fixtures") {
  std::vector<std::uint8_t> y(100, 0);
  std::fill(y.begin(), y.begin() + 25, 1);
  const std::vector<double> ones(100, 1.0);
  CHECK(init_score(y, ones) == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-12));
  CHECK(init_score(y, ones) == doctest::Approx(-1.0986).epsilon(1e-4));

  std::vector<std::uint8_t> y9(100, 0);
  std::fill(y9.begin(), y9.begin() + 9, 1);
  std::vector<double> w(100, 1.0);
  std::fill(w.begin(), w.begin() + 9, 91.0 / 9.0);
  CHECK(std::abs(init_score(y9, w)) < 1e-12);

  const std::vector<std::uint8_t> neg(10, 0);
  const std::vector<double> w10(10, 1.0);
  const double s = init_score(neg, w10);
  CHECK(std::isfinite(s));
  CHECK(s == doctest::Approx(std::log(1e-12 / 10.0)));
}

TEST_CASE("grad and hess fixtures") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  const std::vector<double> p{0.5, 0.5, 1.0, 0.0};
  const std::vector<double> w{1.0, 10.1, 1.0, 1.0};
  const auto gh = compute_grad_hess(y, p, w);
  CHECK(gh.grad[0] == -0.5);
  CHECK(gh.hess[0] == 0.25);
  CHECK(gh.grad[1] == doctest::Approx(5.05).epsilon(1e-12));
  CHECK(gh.hess[1] == doctest::Approx(2.525).epsilon(1e-12));
  CHECK(gh.grad[2] == 0.0);
  CHECK(gh.grad[3] == 0.0);
}

TEST_CASE("sigmoid and logloss") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  const std::vector<std::uint8_t> y{1, 0};
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> w{3.0, 1.0};
  CHECK(weighted_logloss(y, p, w) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const std::vector<double> sure{1.0, 0.0};
  CHECK(std::isfinite(weighted_logloss(y, std::vector<double>{0.0, 1.0}, w)));
  CHECK(weighted_logloss(y, sure, w) < 1e-12);
}

TEST_CASE("binning fixtures") {
  FeatureMatrix m(6, 2);
  const double col0[] = {3, 1, 2, 3, 1, 2};
  for (std::size_t i = 0; i < 6; ++i) {
    m.values[i * 2] = col0[i];
    m.values[i * 2 + 1] = 4.0;
  }
  const auto [binned, mapper] = bin_features(m, 255);
  CHECK(mapper.num_bins(0) == 3);
  CHECK(mapper.edges(0) == std::vector<double>{1.5, 2.5});
  CHECK(mapper.num_bins(1) == 1);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(binned.at(i, 0) == static_cast<std::uint8_t>(col0[i] - 1));
    CHECK(binned.at(i, 1) == 0);
  }
  CHECK(mapper.bin(0, -100.0) == 0);
  CHECK(mapper.bin(0, 100.0) == 2);
  CHECK(mapper.bin(0, 1.5) == 0);
}

TEST_CASE("binning caps the bin count and preserves rank order") {
  Rng rng(1);
  FeatureMatrix m(2000, 1);
  for (auto& v : m.values) v = rng.normal();
  const auto [binned, mapper] = bin_features(m, 16);
  CHECK(mapper.num_bins(0) == 16);
  std::vector<int> counts(16, 0);
  for (auto b : binned.bins) ++counts[b];
  for (int c : counts) CHECK(std::abs(c - 125) <= 2);

  FeatureMatrix t = m;
  for (auto& v : t.values) v = std::exp(3.0 * v) + 7.0;
  const auto [binned_t, mapper_t] = bin_features(t, 16);
  CHECK(binned_t.bins == binned.bins);
}

TEST_CASE("find_best_split fixture") {
  FeatureMatrix m(4, 1);
  m.values = {1, 2, 3, 4};
  const auto [binned, mapper] = bin_features(m, 255);
  Histogram hist(mapper);
  const std::vector<int> features{0};
  const double g[] = {0.5, 0.5, -0.5, -0.5};
  for (std::size_t i = 0; i < 4; ++i) hist.add(binned.row(i), features, g[i], 0.25);
  const auto s = find_best_split(hist, features, {1, 0.0});
  REQUIRE(s.has_value());
  CHECK(s->feature == 0);
  CHECK(s->bin == 1);
  CHECK(mapper.edges(0)[1] == 2.5);
  CHECK(s->gain == doctest::Approx(4.0).epsilon(1e-12));

  // min leaf of 3 rules out every split
  CHECK_FALSE(find_best_split(hist, features, {3, 0.0}).has_value());
}

TEST_CASE("find_best_split returns nothing without a gain") {
  FeatureMatrix m(4, 1);
  m.values = {1, 2, 3, 4};
  const auto [binned, mapper] = bin_features(m, 255);
  Histogram hist(mapper);
  const std::vector<int> features{0};
  for (std::size_t i = 0; i < 4; ++i) hist.add(binned.row(i), features, 0.5, 0.25);
  CHECK_FALSE(find_best_split(hist, features, {1, 0.0}).has_value());
}

TEST_CASE("duplicated columns tie towards the lower index") {
  FeatureMatrix m(6, 2);
  for (std::size_t i = 0; i < 6; ++i) m.values[i * 2] = m.values[i * 2 + 1] = static_cast<double>(i);
  const auto [binned, mapper] = bin_features(m, 255);
  Histogram hist(mapper);
  const std::vector<int> features{0, 1};
  for (std::size_t i = 0; i < 6; ++i) hist.add(binned.row(i), features, i < 2 ? 0.5 : -0.5, 0.25);
  const auto s = find_best_split(hist, features, {1, 0.0});
  REQUIRE(s.has_value());
  CHECK(s->feature == 0);
}

TEST_CASE("histogram split matches exhaustive search") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_split_instance(rng);
    CAPTURE(trial);
    CHECK(oracle::split_matches(inst));
  }
}

TEST_CASE("grow_tree degenerate and composed cases") {
  Rng rng(3);
  auto toy = noisy_toy(rng, 200);
  const auto [binned, mapper] = bin_features(toy.x, 255);
  std::vector<double> p(200, 0.5), w(200, 1.0);
  const auto gh = compute_grad_hess(toy.y, p, w);
  std::vector<std::uint32_t> rows(200);
  std::iota(rows.begin(), rows.end(), 0U);
  const std::vector<int> features{0, 1, 2, 3};

  TrainConfig c = no_sampling();
  c.max_leaves = 1;
  const auto stump = grow_tree(binned, mapper, gh, c, rows, features);
  REQUIRE(stump.nodes().size() == 1);
  const double g = std::accumulate(gh.grad.begin(), gh.grad.end(), 0.0);
  const double h = std::accumulate(gh.hess.begin(), gh.hess.end(), 0.0);
  CHECK(stump.nodes()[0].value == doctest::Approx(-g / h * c.learning_rate).epsilon(1e-12));

  c.max_leaves = 2;
  const auto two = grow_tree(binned, mapper, gh, c, rows, features);
  REQUIRE(two.nodes().size() == 3);
  Histogram hist(mapper);
  for (auto r : rows) hist.add(binned.row(r), features, gh.grad[r], gh.hess[r]);
  const auto best = find_best_split(hist, features, {c.min_samples_leaf, c.lambda_l2});
  REQUIRE(best.has_value());
  CHECK(two.nodes()[0].feature == best->feature);
  CHECK(two.nodes()[0].bin == best->bin);
}

TEST_CASE("grow_tree honors leaf, depth and min-samples limits") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto toy = noisy_toy(rng, 600, 3, 0.2);
    const auto [binned, mapper] = bin_features(toy.x, 64);
    std::vector<double> p(600, 0.3), w(600, 1.0);
    const auto gh = compute_grad_hess(toy.y, p, w);
    std::vector<std::uint32_t> rows(600);
    std::iota(rows.begin(), rows.end(), 0U);
    std::vector<int> features(toy.x.cols);
    std::iota(features.begin(), features.end(), 0);
    TrainConfig c = no_sampling();
    c.max_leaves = 2 + static_cast<int>(rng.below(30));
    c.max_depth = 1 + static_cast<int>(rng.below(7));
    const auto tree = grow_tree(binned, mapper, gh, c, rows, features);
    CHECK(tree.leaf_count() <= c.max_leaves);
    CHECK(tree.depth() <= c.max_depth);
    for (const auto& n : tree.nodes()) {
      if (n.is_leaf()) CHECK(n.count >= 20u);
    }
  }
}

TEST_CASE("one tree on separable data lowers the training loss") {
  FeatureMatrix x(100, 1);
  std::vector<std::uint8_t> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x.values[i] = static_cast<double>(i);
    y[i] = i >= 50 ? 1 : 0;
  }
  TrainConfig c = no_sampling();
  c.n_rounds = 1;
  const auto r = fit(x, y, FeatureMatrix{}, {}, c, {"x"});
  REQUIRE(r.train_loss.size() == 2);
  CHECK(r.train_loss[1] < r.train_loss[0]);
}

TEST_CASE("separable toy set reaches training AUC 1 within 50 rounds") {
  Rng rng(5);
  Toy toy{FeatureMatrix(200, 2), std::vector<std::uint8_t>(200)};
  for (std::size_t i = 0; i < 200; ++i) {
    double a = 0.0, b = 0.0;
    do {
      a = rng.uniform(-1, 1);
      b = rng.uniform(-1, 1);
    } while (std::abs(a + b) < 0.2);
    toy.x.values[i * 2] = a;
    toy.x.values[i * 2 + 1] = b;
    toy.y[i] = a + b > 0 ? 1 : 0;
  }
  TrainConfig c;
  c.n_rounds = 50;
  c.early_stop_patience = 0;
  const auto r = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {});
  CHECK(r.model.trees.size() == 50);
  std::vector<double> scores;
  for (std::size_t i = 0; i < toy.x.rows; ++i) scores.push_back(r.model.predict_proba(toy.x.row(i)));
  CHECK(eval::roc_auc(toy.y, scores) == 1.0);
}

TEST_CASE("training loss is non-increasing without sampling") {
  Rng rng(6);
  auto toy = noisy_toy(rng, 800, 4, 0.15);
  TrainConfig c = no_sampling();
  c.n_rounds = 200;
  const auto r = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {});
  REQUIRE(r.train_loss.size() == 201);
  for (std::size_t i = 1; i < r.train_loss.size(); ++i) {
    CAPTURE(i);
    CHECK(r.train_loss[i] <= r.train_loss[i - 1]);
  }
}

TEST_CASE("early stopping contract") {
  Rng rng(7);
  auto train = noisy_toy(rng, 600, 6, 0.3);
  auto valid = noisy_toy(rng, 300, 6, 0.3);
  TrainConfig c;
  c.n_rounds = 1000;
  c.early_stop_patience = 20;
  c.seed = 3;
  const auto r = fit(train.x, train.y, valid.x, valid.y, c, {});
  CHECK(r.status == FitStatus::kOk);
  REQUIRE(r.valid_auc.size() == r.model.trees.size());
  CHECK(r.model.trees.size() < 1000);
  const auto best = std::max_element(r.valid_auc.begin(), r.valid_auc.end());
  const auto k = static_cast<std::size_t>(best - r.valid_auc.begin()) + 1;
  CHECK(r.model.best_iteration == k);
  CHECK(r.model.trees.size() <= k + 20);
  CHECK(*r.model.best_valid_auc == *best);
}

TEST_CASE("predictions ignore trees past best_iteration") {
  Rng rng(8);
  auto toy = noisy_toy(rng, 300);
  TrainConfig c;
  c.n_rounds = 20;
  c.early_stop_patience = 0;
  auto model = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {}).model;
  model.best_iteration = 10;
  const auto row = toy.x.row(5);
  const double before = model.predict_proba(row);
  model.trees.push_back(model.trees.front());
  model.trees.push_back(model.trees.back());
  CHECK(model.predict_proba(row) == before);

  BoostedEnsemble empty;
  empty.init_score = 0.3;
  empty.feature_names = {"a"};
  CHECK(empty.predict_proba(std::vector<double>{1.0}) == sigmoid(0.3));
  empty.init_score = 0.0;
  CHECK(empty.predict_proba(std::vector<double>{1.0}) == 0.5);
  empty.init_score = 1e6;
  CHECK(empty.predict_proba(std::vector<double>{1.0}) == 1.0 - 1e-15);
  empty.init_score = -1e6;
  CHECK(empty.predict_proba(std::vector<double>{1.0}) == 1e-15);
  CHECK_THROWS_AS((void)empty.predict_proba(std::vector<double>{1.0, 2.0}), DataError);
}

TEST_CASE("serialized model is deterministic and independent of row order") {
  Rng rng(9);
  auto toy = noisy_toy(rng, 400);
  TrainConfig c;
  c.n_rounds = 30;
  c.early_stop_patience = 0;
  c.bagging_fraction = 1.0;
  c.seed = 77;
  const auto a = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {}).model.to_json().dump();
  const auto b = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {}).model.to_json().dump();
  CHECK(a == b);

  std::vector<std::size_t> perm(toy.x.rows);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  FeatureMatrix px(toy.x.rows, toy.x.cols);
  std::vector<std::uint8_t> py(toy.y.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy(toy.x.row(perm[i]).begin(), toy.x.row(perm[i]).end(), px.row(i).begin());
    py[i] = toy.y[perm[i]];
  }
  CHECK(fit(px, py, FeatureMatrix{}, {}, c, {}).model.to_json().dump() == a);
}

TEST_CASE("model JSON round trip and manifest hash check") {
  Rng rng(10);
  auto toy = noisy_toy(rng, 300);
  TrainConfig c;
  c.n_rounds = 15;
  c.early_stop_patience = 0;
  const auto model = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {"a", "b", "c", "d"}).model;
  const auto j = model.to_json();
  const auto back = BoostedEnsemble::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.to_json().dump() == j.dump());
  for (std::size_t i = 0; i < 20; ++i) CHECK(back.predict_proba(toy.x.row(i)) == model.predict_proba(toy.x.row(i)));

  auto tampered = nlohmann::json::parse(j.dump());
  tampered["feature_names"][0] = "z";
  CHECK_THROWS_AS(BoostedEnsemble::from_json(tampered), DataError);
}

TEST_CASE("feature importance shares") {
  Rng rng(11);
  auto toy = noisy_toy(rng, 500);
  TrainConfig c;
  c.n_rounds = 40;
  c.early_stop_patience = 0;
  const auto model = fit(toy.x, toy.y, FeatureMatrix{}, {}, c, {}).model;
  const auto imp = model.feature_importance();
  double total = 0.0;
  for (const auto& f : imp) total += f.share;
  CHECK(std::abs(total - 1.0) < 1e-12);

  FeatureMatrix x(100, 3);
  std::vector<std::uint8_t> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x.values[i * 3 + 1] = static_cast<double>(i);
    y[i] = i >= 50 ? 1 : 0;
  }
  TrainConfig s = no_sampling();
  s.n_rounds = 1;
  s.max_leaves = 2;
  const auto stump = fit(x, y, FeatureMatrix{}, {}, s, {"a", "b", "c"}).model;
  const auto si = stump.feature_importance();
  REQUIRE(si.size() == 3);
  CHECK(si[1].share == 1.0);
  CHECK(si[0].share == 0.0);

  BoostedEnsemble empty;
  empty.feature_names = {"a"};
  CHECK(empty.feature_importance().empty());
}

TEST_CASE("degenerate training inputs") {
  FeatureMatrix x(10, 1);
  for (std::size_t i = 0; i < 10; ++i) x.values[i] = static_cast<double>(i);
  const std::vector<std::uint8_t> y(10, 0);
  const auto r = fit(x, y, FeatureMatrix{}, {}, TrainConfig{}, {});
  CHECK(r.status == FitStatus::kSingleClass);
  CHECK(r.model.trees.empty());

  std::vector<std::uint8_t> mixed(10, 0);
  mixed[9] = 1;
  const auto nv = fit(x, mixed, x, y, TrainConfig{}, {});
  CHECK(nv.status == FitStatus::kNoValidation);

  TrainConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.max_leaves = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.feature_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"n_round", 3}}), ConfigError);
  TrainConfig ok;
  ok.pos_weight = 10.1;
  CHECK(TrainConfig::from_json(ok.to_json()).pos_weight == 10.1);
}
