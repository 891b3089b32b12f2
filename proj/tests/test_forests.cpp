#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>

#include "guardnet/forest.hpp"

using namespace guardnet;

namespace {

struct Fixture {
  Tensor64 x;
  std::vector<std::uint8_t> y;
};

Fixture random_fixture(std::size_t n, std::size_t d, std::uint64_t seed, bool quantized) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 4);
  Fixture f{Tensor64({n, d}), std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      f.x(i, j) = quantized ? static_cast<double>(small(rng)) : normal(rng);
      s += (j + 1.0) * f.x(i, j);
    }
    f.y[i] = (s + 0.7 * normal(rng)) > (quantized ? 2.0 * static_cast<double>(d) : 0.0) ? 1 : 0;
  }
  return f;
}

double accuracy_of(const Tree& t, const Fixture& f) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < f.y.size(); ++i) ok += (t.predict(f.x.row_span(i)) >= 0.5) == (f.y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(f.y.size());
}

// Exhaustive first split: every feature, every midpoint, same tie-break as the fitter.
SplitChoice oracle_split(const Fixture& f, Criterion c) {
  const std::size_t n = f.y.size(), d = f.x.cols();
  double pos = 0;
  for (auto v : f.y) pos += v;
  const double parent = impurity(static_cast<double>(n) - pos, pos, c);
  SplitChoice best;
  for (std::size_t j = 0; j < d; ++j) {
    std::set<double> values;
    for (std::size_t i = 0; i < n; ++i) values.insert(f.x(i, j));
    std::vector<double> v(values.begin(), values.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      const double thr = v[k] + (v[k + 1] - v[k]) / 2.0;
      double ln = 0, lp = 0, rn = 0, rp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool left = f.x(i, j) <= thr;
        (left ? (f.y[i] ? lp : ln) : (f.y[i] ? rp : rn)) += 1;
      }
      const double dec = parent - ((ln + lp) * impurity(ln, lp, c) + (rn + rp) * impurity(rn, rp, c)) /
                                      static_cast<double>(n);
      if (!best.found || dec > best.decrease + 1e-12) best = {true, j, thr, dec};
    }
  }
  return best;
}

}  // namespace

TEST_CASE("impurity examples", "[forests]") {
  CHECK(impurity(5, 5, Criterion::gini) == 0.5);
  CHECK(impurity(10, 0, Criterion::gini) == 0.0);
  CHECK(impurity(10, 0, Criterion::entropy) == 0.0);
  CHECK(impurity(0, 7, Criterion::entropy) == 0.0);
  CHECK(impurity(1, 3, Criterion::gini) == Catch::Approx(0.375).epsilon(1e-15));
  CHECK(impurity(5, 5, Criterion::entropy) == Catch::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(impurity(0, 0, Criterion::gini), UsageError);
  CHECK(parse_criterion("entropy") == Criterion::entropy);
  CHECK_THROWS_AS(parse_criterion("mse"), ConfigError);
}

TEST_CASE("fit_tree simple structures", "[forests]") {
  ForestConfig cfg;
  cfg.max_depth = 5;

  Fixture pure{Tensor64::matrix({{1}, {2}, {3}}), {1, 1, 1}};
  const Tree leaf = fit_tree(pure.x, pure.y, cfg);
  REQUIRE(leaf.nodes.size() == 1);
  CHECK(leaf.nodes[0].is_leaf);
  CHECK(leaf.nodes[0].value == 1.0);

  Fixture line{Tensor64::matrix({{0.1}, {0.4}, {0.5}, {2.0}, {2.5}, {3.0}}), {0, 0, 0, 1, 1, 1}};
  const Tree stump = fit_tree(line.x, line.y, cfg);
  CHECK(stump.depth() == 1);
  CHECK(stump.nodes[0].threshold == Catch::Approx(1.25));
  CHECK(accuracy_of(stump, line) == 1.0);

  Fixture xor_data{Tensor64::matrix({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 0}, {1, 1}}), {0, 1, 1, 0, 0, 0}};
  ForestConfig two = cfg;
  two.max_depth = 2;
  const Tree xor_tree = fit_tree(xor_data.x, xor_data.y, two);
  CHECK(xor_tree.depth() <= 2);
  CHECK(accuracy_of(xor_tree, xor_data) == 1.0);

  // Deeper data is still capped by max_depth.
  const Fixture noisy = random_fixture(200, 3, 9, false);
  for (int depth : {1, 2, 3, 5}) {
    ForestConfig c = cfg;
    c.max_depth = depth;
    CHECK(fit_tree(noisy.x, noisy.y, c).depth() <= static_cast<std::size_t>(depth));
  }
}

TEST_CASE("first split matches an exhaustive oracle", "[forests][oracle]") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t n = 2 + seed % 63, d = 1 + seed % 3;
    const Fixture f = random_fixture(n, d, 1000 + seed, seed % 2 == 0);
    for (Criterion c : {Criterion::gini, Criterion::entropy}) {
      const SplitChoice expected = oracle_split(f, c);
      std::vector<std::size_t> rows(n), features(d);
      std::iota(rows.begin(), rows.end(), 0);
      std::iota(features.begin(), features.end(), 0);
      const SplitChoice got = best_split(f.x, f.y, rows, features, c);
      INFO("seed " << seed << " n " << n << " d " << d);
      REQUIRE(got.found == expected.found);
      if (!got.found) continue;
      CHECK(std::abs(got.decrease - expected.decrease) <= 1e-12);
      CHECK(got.feature == expected.feature);
      CHECK(got.threshold == expected.threshold);
    }
  }
}

TEST_CASE("forest reduces to a single tree and is seeded", "[forests]") {
  const Fixture f = random_fixture(150, 4, 3, false);
  ForestConfig one;
  one.n_estimators = 1;
  one.bootstrap = false;
  one.feature_subsample = FeatureSubsample::all;
  one.max_depth = 6;
  const RandomForest rf = fit_forest(f.x, f.y, one);
  REQUIRE(rf.trees.size() == 1);
  CHECK(rf.trees[0] == fit_tree(f.x, f.y, one));

  ForestConfig cfg;
  cfg.n_estimators = 12;
  cfg.max_depth = 6;
  cfg.seed = 17;
  const RandomForest a = fit_forest(f.x, f.y, cfg, kernels::Exec::serial);
  const RandomForest b = fit_forest(f.x, f.y, cfg, kernels::Exec::parallel);
  CHECK(a == b);
  cfg.seed = 18;
  CHECK_FALSE(fit_forest(f.x, f.y, cfg) == a);

  const ForestConfig defaults;
  CHECK(defaults.n_estimators == 100);
  CHECK(defaults.max_depth == 20);
  CHECK(defaults.criterion == Criterion::gini);
  CHECK(defaults.bootstrap);
  CHECK(defaults.feature_subsample == FeatureSubsample::sqrt);

  ForestConfig bad;
  bad.n_estimators = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ForestConfig{};
  bad.max_depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forest probability is the mean of member trees", "[forests]") {
  auto leaf = [](double v) {
    Tree t;
    t.nodes.push_back(TreeNode{true, -1, 0.0, v, 0, 0, 0, -1, -1});
    return t;
  };
  RandomForest rf;
  rf.n_features = 2;
  rf.trees = {leaf(1.0), leaf(0.0), leaf(0.5)};
  const std::vector<double> x{0.0, 0.0};
  CHECK(predict_proba(rf, x) == 0.5);
  rf.trees = {leaf(1.0), leaf(1.0)};
  CHECK(predict_proba(rf, x) == 1.0);

  CHECK_THROWS_AS(predict_proba(RandomForest{}, x), StateError);
  CHECK_THROWS_AS(predict_proba(Ensemble{BoostedEnsemble{}}, x), StateError);

  const Fixture f = random_fixture(120, 3, 5, false);
  ForestConfig cfg;
  cfg.n_estimators = 9;
  cfg.max_depth = 5;
  const RandomForest fitted = fit_forest(f.x, f.y, cfg);
  const Ensemble e = fitted;
  const auto batch = predict_proba_batch(e, f.x);
  for (std::size_t i = 0; i < f.y.size(); ++i) {
    double s = 0.0;
    for (const auto& t : fitted.trees) s += t.predict(f.x.row_span(i));
    const double mean = s / static_cast<double>(fitted.trees.size());
    CHECK(predict_proba(fitted, f.x.row_span(i)) == mean);
    CHECK(batch[i] == mean);
    CHECK(mean >= 0.0);
    CHECK(mean <= 1.0);
  }
  CHECK(predict_proba_batch(e, f.x, kernels::Exec::serial) == predict_proba_batch(e, f.x, kernels::Exec::parallel));
}

TEST_CASE("boosted ensemble base score and monotone training loss", "[forests][boost]") {
  BoostConfig zero;
  zero.n_rounds = 0;
  const Tensor64 x = Tensor64::matrix({{0}, {1}, {2}, {3}});
  CHECK(predict_proba(fit_boosted(x, std::vector<std::uint8_t>{0, 1, 0, 1}, zero), std::vector<double>{1.5}) == 0.5);
  CHECK(predict_proba(fit_boosted(x, std::vector<std::uint8_t>{1, 1, 0, 1}, zero), std::vector<double>{0.0}) ==
        Catch::Approx(0.75).epsilon(1e-15));

  for (std::uint64_t seed : {1, 2, 3}) {
    const Fixture f = random_fixture(100, 3, 40 + seed, false);
    BoostConfig cfg;
    cfg.max_depth = 3;
    double previous = std::numeric_limits<double>::infinity();
    for (int rounds = 0; rounds <= 20; ++rounds) {
      cfg.n_rounds = rounds;
      const double loss = log_loss(fit_boosted(f.x, f.y, cfg), f.x, f.y);
      CHECK(loss <= previous);
      previous = loss;
    }
  }

  // Separable data: strictly decreasing loss each round.
  Fixture sep{Tensor64({40, 1}), std::vector<std::uint8_t>(40)};
  for (std::size_t i = 0; i < 40; ++i) {
    sep.x(i, 0) = static_cast<double>(i);
    sep.y[i] = i >= 25 ? 1 : 0;
  }
  BoostConfig cfg;
  double previous = std::numeric_limits<double>::infinity();
  for (int rounds = 0; rounds <= 20; ++rounds) {
    cfg.n_rounds = rounds;
    const BoostedEnsemble b = fit_boosted(sep.x, sep.y, cfg);
    const double loss = log_loss(b, sep.x, sep.y);
    CHECK(loss < previous);
    previous = loss;
    CHECK(predict_proba(b, std::vector<double>{3.0}) ==
          Catch::Approx(1.0 / (1.0 + std::exp(-predict_margin(b, std::vector<double>{3.0})))).epsilon(1e-15));
  }

  const BoostConfig defaults;
  CHECK(defaults.n_rounds == 100);
  CHECK(defaults.max_depth == 6);
  CHECK(defaults.shrinkage == 0.1);
  BoostConfig bad;
  bad.n_rounds = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(fit_boosted(x, std::vector<std::uint8_t>{0, 1, 0, 1}, bad), ConfigError);
  bad = BoostConfig{};
  bad.shrinkage = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("feature importances", "[forests]") {
  Fixture stump_data{Tensor64({8, 5}), {0, 0, 0, 0, 1, 1, 1, 1}};
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 5; ++j) stump_data.x(i, j) = 1.0;
    stump_data.x(i, 3) = static_cast<double>(i);
  }
  ForestConfig one;
  one.n_estimators = 1;
  one.bootstrap = false;
  one.feature_subsample = FeatureSubsample::all;
  const auto imp = feature_importances(Ensemble{fit_forest(stump_data.x, stump_data.y, one)});
  CHECK(imp == std::vector<double>{0, 0, 0, 1, 0});

  const Fixture f = random_fixture(150, 4, 8, false);
  ForestConfig cfg;
  cfg.n_estimators = 6;
  cfg.max_depth = 5;
  BoostConfig bc;
  bc.n_rounds = 6;
  for (const Ensemble& e : {Ensemble{fit_forest(f.x, f.y, cfg)}, Ensemble{fit_boosted(f.x, f.y, bc)}}) {
    const auto v = feature_importances(e);
    REQUIRE(v.size() == 4);
    CHECK(std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) <= 1e-9);
    for (double w : v) CHECK(w >= 0.0);
  }

  Fixture pure{Tensor64({5, 3}, 1.0), {1, 1, 1, 1, 1}};
  CHECK(feature_importances(Ensemble{fit_forest(pure.x, pure.y, cfg)}) == std::vector<double>(3, 0.0));
}
