#pragma once

#include <vector>

#include "guardnet/tensor.hpp"

namespace guardnet {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First and second moments, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor64> m;
  std::vector<Tensor64> v;
};

/// One AdamW update at 1-based `step`. Decay p -= lr*wd*p runs before the
/// moment term. Empty state is initialized to zeros on the first call.
/// A non-finite gradient throws TrainingError before anything is modified.
void adamw_step(const std::vector<Tensor64*>& params, const std::vector<Tensor64>& grads, AdamState& state,
                long step, double lr, const AdamWConfig& cfg);

// Scales grads in place so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor64>& grads, double max_norm);

}  // namespace guardnet
