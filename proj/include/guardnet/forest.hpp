#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "guardnet/kernels.hpp"
#include "guardnet/tensor.hpp"

namespace guardnet {

enum class Criterion { gini, entropy };
enum class FeatureSubsample { sqrt, all };

Criterion parse_criterion(std::string_view name);

struct ForestConfig {
  int n_estimators = 100;
  int max_depth = 20;
  Criterion criterion = Criterion::gini;
  bool bootstrap = true;
  FeatureSubsample feature_subsample = FeatureSubsample::sqrt;
  int min_samples_split = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BoostConfig {
  int n_rounds = 100;
  int max_depth = 6;
  double shrinkage = 0.1;
  double lambda_reg = 1.0;
  double min_child_weight = 1.0;

  void validate() const;
};

// Split nodes send x[feature] <= threshold left. Leaves carry the positive
// fraction (classification) or the Newton leaf weight (boosting) in `value`.
struct TreeNode {
  bool is_leaf = true;
  std::int32_t feature = -1;
  double threshold = 0.0;
  double value = 0.0;
  double count_neg = 0.0;
  double count_pos = 0.0;
  double gain = 0.0;  // impurity decrease (weighted by node share) or boosting gain
  std::int32_t left = -1;
  std::int32_t right = -1;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  std::size_t depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct RandomForest {
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  friend bool operator==(const RandomForest&, const RandomForest&) = default;
};

struct BoostedEnsemble {
  std::size_t n_features = 0;
  double base_score = 0.0;  // log-odds of the training positive rate
  double shrinkage = 0.1;
  std::vector<Tree> trees;
  friend bool operator==(const BoostedEnsemble&, const BoostedEnsemble&) = default;
};

using Ensemble = std::variant<RandomForest, BoostedEnsemble>;

// Gini: 1 - sum p_i^2. Entropy: -sum p_i log2 p_i with 0 log 0 = 0.
double impurity(double n_neg, double n_pos, Criterion criterion);

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double decrease = 0.0;  // parent impurity minus size-weighted child impurities
};

/// Best classification split of `rows` over `features`, trying the midpoints
/// of adjacent sorted unique values. Ties go to the lowest feature index,
/// then the lowest threshold.
SplitChoice best_split(const Tensor64& x, std::span<const std::uint8_t> y, std::span<const std::size_t> rows,
                       std::span<const std::size_t> features, Criterion criterion);

// Greedy tree on all rows and all features (no bootstrap, no subsampling).
Tree fit_tree(const Tensor64& x, std::span<const std::uint8_t> y, const ForestConfig& cfg);

RandomForest fit_forest(const Tensor64& x, std::span<const std::uint8_t> y, const ForestConfig& cfg,
                        kernels::Exec exec = kernels::default_exec());

BoostedEnsemble fit_boosted(const Tensor64& x, std::span<const std::uint8_t> y, const BoostConfig& cfg);

// Positive-class probability. Throws StateError for an unfitted ensemble.
double predict_proba(const Ensemble& e, std::span<const double> x);
double predict_proba(const RandomForest& f, std::span<const double> x);
double predict_proba(const BoostedEnsemble& b, std::span<const double> x);
double predict_margin(const BoostedEnsemble& b, std::span<const double> x);

std::vector<double> predict_proba_batch(const Ensemble& e, const Tensor64& x,
                                        kernels::Exec exec = kernels::default_exec());

// Per-feature impurity decrease (forest) or gain (boosted), normalized to sum
// to 1 when any split exists; all zeros otherwise.
std::vector<double> feature_importances(const Ensemble& e);

double log_loss(const BoostedEnsemble& b, const Tensor64& x, std::span<const std::uint8_t> y);

}  // namespace guardnet
