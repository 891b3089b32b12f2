#include "guardnet/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "guardnet/error.hpp"

namespace guardnet {

Criterion parse_criterion(std::string_view name) {
  if (name == "gini") return Criterion::gini;
  if (name == "entropy") return Criterion::entropy;
  throw ConfigError("unknown split criterion '" + std::string(name) + "' (valid: gini, entropy)");
}

void ForestConfig::validate() const {
  if (n_estimators < 1) throw ConfigError("n_estimators must be at least 1");
  if (max_depth < 1) throw ConfigError("max_depth must be at least 1");
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
}

void BoostConfig::validate() const {
  if (n_rounds < 0) throw ConfigError("n_rounds must be non-negative");
  if (max_depth < 1) throw ConfigError("max_depth must be at least 1");
  if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in (0, 1]");
  if (lambda_reg < 0.0) throw ConfigError("lambda_reg must be non-negative");
  if (min_child_weight < 0.0) throw ConfigError("min_child_weight must be non-negative");
}

double Tree::predict(std::span<const double> x) const {
  if (nodes.empty()) throw StateError("tree has no nodes");
  std::size_t i = 0;
  while (!nodes[i].is_leaf) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

std::size_t Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::size_t> depth(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, depth[i]);
    if (!nodes[i].is_leaf) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return best;
}

double impurity(double n_neg, double n_pos, Criterion criterion) {
  const double n = n_neg + n_pos;
  if (!(n >= 1.0)) throw UsageError("impurity of an empty node");
  const double p[2] = {n_neg / n, n_pos / n};
  if (criterion == Criterion::gini) return 1.0 - (p[0] * p[0] + p[1] * p[1]);
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log2(q);
  }
  return h;
}

namespace {

void check_inputs(const Tensor64& x, std::span<const std::uint8_t> y) {
  if (x.rank() != 2) throw DimensionError("feature matrix must be n x d");
  if (x.rows() != y.size()) throw DimensionError("feature rows and label count differ");
  if (y.empty()) throw UsageError("cannot fit on zero samples");
  for (auto v : y) {
    if (v > 1) throw DataError("labels must be 0 or 1");
  }
}

// Midpoint that still separates lo from hi when they are adjacent doubles.
double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid >= hi ? lo : mid;
}

struct Sorted {
  double value;
  std::size_t row;
};

void sort_rows(const Tensor64& x, std::span<const std::size_t> rows, std::size_t feature, std::vector<Sorted>& out) {
  out.clear();
  for (std::size_t r : rows) out.push_back({x(r, feature), r});
  std::stable_sort(out.begin(), out.end(), [](const Sorted& a, const Sorted& b) { return a.value < b.value; });
}

class ClassificationBuilder {
 public:
  ClassificationBuilder(const Tensor64& x, std::span<const std::uint8_t> y, const ForestConfig& cfg,
                        std::mt19937_64* rng, std::size_t total)
      : x_(x), y_(y), cfg_(cfg), rng_(rng), total_(static_cast<double>(total)) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree t;
    grow(t, std::move(rows), 0);
    return t;
  }

 private:
  std::size_t grow(Tree& t, std::vector<std::size_t> rows, int depth) {
    const std::size_t id = t.nodes.size();
    t.nodes.emplace_back();
    double pos = 0.0;
    for (std::size_t r : rows) pos += y_[r];
    const double n = static_cast<double>(rows.size());
    {
      TreeNode& node = t.nodes[id];
      node.count_pos = pos;
      node.count_neg = n - pos;
      node.value = pos / n;
    }
    const bool pure = pos == 0.0 || pos == n;
    if (pure || depth >= cfg_.max_depth || rows.size() < static_cast<std::size_t>(cfg_.min_samples_split)) return id;

    const SplitChoice split = choose(rows);
    if (!split.found) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x_(r, split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    {
      TreeNode& node = t.nodes[id];
      node.is_leaf = false;
      node.feature = static_cast<std::int32_t>(split.feature);
      node.threshold = split.threshold;
      node.gain = (n / total_) * split.decrease;
    }
    const auto l = grow(t, std::move(left), depth + 1);
    const auto r = grow(t, std::move(right), depth + 1);
    t.nodes[id].left = static_cast<std::int32_t>(l);
    t.nodes[id].right = static_cast<std::int32_t>(r);
    return id;
  }

  SplitChoice choose(std::span<const std::size_t> rows) {
    const std::size_t d = x_.cols();
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t k = d;
    if (rng_ != nullptr && cfg_.feature_subsample == FeatureSubsample::sqrt) {
      k = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
      std::shuffle(order.begin(), order.end(), *rng_);
    }
    std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(first.begin(), first.end());
    SplitChoice best = best_split(x_, y_, rows, first, cfg_.criterion);
    if (!best.found && k < d) {
      // Sampled features were all constant here; fall back to the rest.
      std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
      std::sort(rest.begin(), rest.end());
      best = best_split(x_, y_, rows, rest, cfg_.criterion);
    }
    return best;
  }

  const Tensor64& x_;
  std::span<const std::uint8_t> y_;
  const ForestConfig& cfg_;
  std::mt19937_64* rng_;
  double total_;
};

}  // namespace

constexpr double kTieTolerance = 1e-12;

SplitChoice best_split(const Tensor64& x, std::span<const std::uint8_t> y, std::span<const std::size_t> rows,
                       std::span<const std::size_t> features, Criterion criterion) {
  SplitChoice best;
  if (rows.size() < 2) return best;
  double pos_total = 0.0;
  for (std::size_t r : rows) pos_total += y[r];
  const double n = static_cast<double>(rows.size());
  const double parent = impurity(n - pos_total, pos_total, criterion);

  std::vector<Sorted> sorted;
  sorted.reserve(rows.size());
  for (std::size_t f : features) {
    sort_rows(x, rows, f, sorted);
    double left_pos = 0.0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      left_pos += y[sorted[i].row];
      if (sorted[i].value == sorted[i + 1].value) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = n - nl;
      const double right_pos = pos_total - left_pos;
      const double decrease = parent - (nl / n) * impurity(nl - left_pos, left_pos, criterion) -
                              (nr / n) * impurity(nr - right_pos, right_pos, criterion);
      // Decreases within kTieTolerance are equal up to rounding; the lower feature index wins.
      const bool better = decrease > best.decrease + kTieTolerance ||
                          (decrease >= best.decrease - kTieTolerance && f < best.feature);
      if (!best.found || better) {
        best = {true, f, split_point(sorted[i].value, sorted[i + 1].value), decrease};
      }
    }
  }
  return best;
}

Tree fit_tree(const Tensor64& x, std::span<const std::uint8_t> y, const ForestConfig& cfg) {
  cfg.validate();
  check_inputs(x, y);
  std::vector<std::size_t> rows(y.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return ClassificationBuilder(x, y, cfg, nullptr, rows.size()).build(std::move(rows));
}

RandomForest fit_forest(const Tensor64& x, std::span<const std::uint8_t> y, const ForestConfig& cfg,
                        kernels::Exec exec) {
  cfg.validate();
  check_inputs(x, y);
  RandomForest forest;
  forest.n_features = x.cols();
  forest.trees.resize(static_cast<std::size_t>(cfg.n_estimators));
  const std::size_t n = y.size();
  // Each tree draws from its own generator seeded with seed + tree index.
  kernels::for_each_index(
      forest.trees.size(),
      [&](std::size_t t) {
        std::mt19937_64 rng(cfg.seed + t);
        std::vector<std::size_t> rows(n);
        if (cfg.bootstrap) {
          std::uniform_int_distribution<std::size_t> pick(0, n - 1);
          for (auto& r : rows) r = pick(rng);
        } else {
          std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        const bool subsample = cfg.feature_subsample == FeatureSubsample::sqrt;
        ClassificationBuilder builder(x, y, cfg, subsample ? &rng : nullptr, n);
        forest.trees[t] = builder.build(std::move(rows));
      },
      exec);
  return forest;
}

namespace {

class RegressionBuilder {
 public:
  RegressionBuilder(const Tensor64& x, const std::vector<double>& g, const std::vector<double>& h,
                    const BoostConfig& cfg)
      : x_(x), g_(g), h_(h), cfg_(cfg) {}

  Tree build() {
    std::vector<std::size_t> rows(g_.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Tree t;
    grow(t, std::move(rows), 0);
    return t;
  }

 private:
  double score(double g, double h) const { return g * g / (h + cfg_.lambda_reg); }

  std::size_t grow(Tree& t, std::vector<std::size_t> rows, int depth) {
    const std::size_t id = t.nodes.size();
    t.nodes.emplace_back();
    double gsum = 0.0, hsum = 0.0;
    for (std::size_t r : rows) {
      gsum += g_[r];
      hsum += h_[r];
    }
    t.nodes[id].value = -gsum / (hsum + cfg_.lambda_reg);
    t.nodes[id].count_neg = static_cast<double>(rows.size());
    if (depth >= cfg_.max_depth || rows.size() < 2) return id;

    bool found = false;
    std::size_t best_f = 0;
    double best_thr = 0.0, best_gain = 0.0;
    std::vector<Sorted> sorted;
    sorted.reserve(rows.size());
    const double parent = score(gsum, hsum);
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      sort_rows(x_, rows, f, sorted);
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        gl += g_[sorted[i].row];
        hl += h_[sorted[i].row];
        if (sorted[i].value == sorted[i + 1].value) continue;
        const double hr = hsum - hl;
        if (hl < cfg_.min_child_weight || hr < cfg_.min_child_weight) continue;
        const double gain = 0.5 * (score(gl, hl) + score(gsum - gl, hr) - parent);
        if (gain > best_gain) {
          found = true;
          best_gain = gain;
          best_f = f;
          best_thr = split_point(sorted[i].value, sorted[i + 1].value);
        }
      }
    }
    if (!found) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x_(r, best_f) <= best_thr ? left : right).push_back(r);
    t.nodes[id].is_leaf = false;
    t.nodes[id].feature = static_cast<std::int32_t>(best_f);
    t.nodes[id].threshold = best_thr;
    t.nodes[id].gain = best_gain;
    const auto l = grow(t, std::move(left), depth + 1);
    const auto r = grow(t, std::move(right), depth + 1);
    t.nodes[id].left = static_cast<std::int32_t>(l);
    t.nodes[id].right = static_cast<std::int32_t>(r);
    return id;
  }

  const Tensor64& x_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const BoostConfig& cfg_;
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

BoostedEnsemble fit_boosted(const Tensor64& x, std::span<const std::uint8_t> y, const BoostConfig& cfg) {
  cfg.validate();
  check_inputs(x, y);
  const std::size_t n = y.size();
  double pos = 0.0;
  for (auto v : y) pos += v;
  // Clamp keeps the base score finite on single-class data.
  const double rate = std::clamp(pos / static_cast<double>(n), 1e-12, 1.0 - 1e-12);

  BoostedEnsemble b;
  b.n_features = x.cols();
  b.base_score = std::log(rate / (1.0 - rate));
  b.shrinkage = cfg.shrinkage;

  std::vector<double> margin(n, b.base_score), g(n), h(n);
  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = p - static_cast<double>(y[i]);
      h[i] = p * (1.0 - p);
    }
    Tree tree = RegressionBuilder(x, g, h, cfg).build();
    for (std::size_t i = 0; i < n; ++i) margin[i] += b.shrinkage * tree.predict(x.row_span(i));
    b.trees.push_back(std::move(tree));
  }
  return b;
}

double predict_proba(const RandomForest& f, std::span<const double> x) {
  if (f.trees.empty()) throw StateError("random forest is not fitted");
  if (x.size() != f.n_features) throw DimensionError("feature vector has wrong length");
  double total = 0.0;
  for (const auto& t : f.trees) total += t.predict(x);
  return total / static_cast<double>(f.trees.size());
}

double predict_margin(const BoostedEnsemble& b, std::span<const double> x) {
  if (b.n_features == 0) throw StateError("boosted ensemble is not fitted");
  if (x.size() != b.n_features) throw DimensionError("feature vector has wrong length");
  double m = 0.0;
  for (const auto& t : b.trees) m += t.predict(x);
  return b.base_score + b.shrinkage * m;
}

double predict_proba(const BoostedEnsemble& b, std::span<const double> x) { return sigmoid(predict_margin(b, x)); }

double predict_proba(const Ensemble& e, std::span<const double> x) {
  return std::visit([&](const auto& m) { return predict_proba(m, x); }, e);
}

std::vector<double> predict_proba_batch(const Ensemble& e, const Tensor64& x, kernels::Exec exec) {
  std::vector<double> out(x.rows());
  kernels::for_each_index(out.size(), [&](std::size_t i) { out[i] = predict_proba(e, x.row_span(i)); }, exec);
  return out;
}

std::vector<double> feature_importances(const Ensemble& e) {
  return std::visit(
      [](const auto& m) {
        std::vector<double> imp(m.n_features, 0.0);
        for (const auto& t : m.trees)
          for (const auto& node : t.nodes)
            if (!node.is_leaf) imp[static_cast<std::size_t>(node.feature)] += node.gain;
        const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
        if (total > 0.0)
          for (auto& v : imp) v /= total;
        return imp;
      },
      e);
}

double log_loss(const BoostedEnsemble& b, const Tensor64& x, std::span<const std::uint8_t> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = predict_margin(b, x.row_span(i));
    // log(1 + exp(-s z)) with s = +-1, computed stably
    const double sz = y[i] ? z : -z;
    total += std::max(-sz, 0.0) + std::log1p(std::exp(-std::abs(sz)));
  }
  return total / static_cast<double>(y.size());
}

}  // namespace guardnet
