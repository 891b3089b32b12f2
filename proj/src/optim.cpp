#include "guardnet/optim.hpp"

#include <cmath>
#include <string>

#include "guardnet/error.hpp"

namespace guardnet {

void adamw_step(const std::vector<Tensor64*>& params, const std::vector<Tensor64>& grads, AdamState& state,
                long step, double lr, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionError("adamw_step: params and grads differ in count");
  if (step < 1) throw UsageError("adamw_step: step must be >= 1");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape()) {
      throw DimensionError("adamw_step: grad " + std::to_string(i) + " has shape " + shape_str(grads[i].shape()) +
                           ", param has " + shape_str(params[i]->shape()));
    }
    if (!grads[i].all_finite()) throw TrainingError("non-finite gradient in parameter " + std::to_string(i));
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw StateError("adamw_step: optimizer state does not match params");

  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= lr * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double clip_grad_norm(std::vector<Tensor64>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.values()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.storage()) x *= s;
    }
  }
  return norm;
}

}  // namespace guardnet
