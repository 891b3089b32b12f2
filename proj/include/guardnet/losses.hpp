#pragma once

#include <array>

#include "guardnet/labels.hpp"
#include "guardnet/tape.hpp"

namespace guardnet {

using TaskWeights = std::array<double, kNumLabels>;  // (jailbreak, prompt_injection)

struct FocalConfig {
  double gamma = 2.0;
  TaskWeights task_weights{1.0, 1.0};

  void validate() const;
};

// Weighted binary cross-entropy on B x 2 logits, averaged over B * 2 terms.
// Targets must be exactly 0 or 1 (DataError otherwise).
Var<double> bce_loss(Var<double> logits, const Tensor64& targets, const TaskWeights& weights = {1.0, 1.0});

/// Focal-modulated BCE: mean of w_k (1 - p_t)^gamma (-log p_t). Evaluated in
/// log space through softplus, so gamma = 0 reproduces bce_loss.
Var<double> focal_loss(Var<double> logits, const Tensor64& targets, const FocalConfig& cfg);

}  // namespace guardnet
