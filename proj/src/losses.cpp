#include "guardnet/losses.hpp"

#include <cmath>
#include <string>

namespace guardnet {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_inputs(const Tensor64& logits, const Tensor64& targets, const TaskWeights& w) {
  if (logits.rank() != 2 || logits.cols() != kNumLabels) {
    throw DimensionError("loss expects B x 2 logits, got " + shape_str(logits.shape()));
  }
  if (targets.shape() != logits.shape()) {
    throw DimensionError("targets " + shape_str(targets.shape()) + " do not match logits " +
                         shape_str(logits.shape()));
  }
  for (double t : targets.values()) {
    if (t != 0.0 && t != 1.0) throw DataError("loss targets must be 0 or 1, got " + std::to_string(t));
  }
  for (double wk : w) {
    if (!(wk > 0.0)) throw ConfigError("task weights must be positive");
  }
}

}  // namespace

void FocalConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("focal gamma must be >= 0");
  for (double wk : task_weights) {
    if (!(wk > 0.0)) throw ConfigError("task weights must be positive");
  }
}

Var<double> bce_loss(Var<double> logits, const Tensor64& targets, const TaskWeights& weights) {
  const Tensor64& z = logits.value();
  check_inputs(z, targets, weights);
  const std::size_t b = z.rows();
  const double inv_n = 1.0 / static_cast<double>(b * kNumLabels);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      const double zi = z(i, k), t = targets(i, k);
      total += weights[k] * (std::max(zi, 0.0) - zi * t + std::log1p(std::exp(-std::abs(zi))));
    }
  }
  return logits.tape().record(Tensor64({1, 1}, total * inv_n), {logits},
                              [logits, targets, weights, inv_n](Tape<double>& tape, std::size_t self) {
                                const double up = tape.grad(self)[0];
                                const Tensor64& z = logits.value();
                                Tensor64& g = tape.grad(logits.id());
                                for (std::size_t i = 0; i < z.rows(); ++i) {
                                  for (std::size_t k = 0; k < kNumLabels; ++k) {
                                    g(i, k) += up * inv_n * weights[k] * (stable_sigmoid(z(i, k)) - targets(i, k));
                                  }
                                }
                              });
}

Var<double> focal_loss(Var<double> logits, const Tensor64& targets, const FocalConfig& cfg) {
  cfg.validate();
  const Tensor64& z = logits.value();
  check_inputs(z, targets, cfg.task_weights);
  const std::size_t b = z.rows();
  const double inv_n = 1.0 / static_cast<double>(b * kNumLabels);
  const double gamma = cfg.gamma;
  const TaskWeights w = cfg.task_weights;

  // With u = s z and s = +-1 by target, p_t = sigmoid(u),
  // (1 - p_t)^gamma = exp(-gamma softplus(u)) and -log p_t = softplus(-u).
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      const double u = targets(i, k) == 1.0 ? z(i, k) : -z(i, k);
      total += w[k] * std::exp(-gamma * softplus(u)) * softplus(-u);
    }
  }
  return logits.tape().record(
      Tensor64({1, 1}, total * inv_n), {logits},
      [logits, targets, w, gamma, inv_n](Tape<double>& tape, std::size_t self) {
        const double up = tape.grad(self)[0];
        const Tensor64& z = logits.value();
        Tensor64& g = tape.grad(logits.id());
        for (std::size_t i = 0; i < z.rows(); ++i) {
          for (std::size_t k = 0; k < kNumLabels; ++k) {
            const double s = targets(i, k) == 1.0 ? 1.0 : -1.0;
            const double u = s * z(i, k);
            const double p = stable_sigmoid(u);
            const double q = stable_sigmoid(-u);
            const double mod = std::exp(-gamma * softplus(u));  // q^gamma
            // dL/du = w [-gamma p q^gamma softplus(-u) - q^(gamma+1)]
            const double dldu = w[k] * (-gamma * p * mod * softplus(-u) - mod * q);
            g(i, k) += up * inv_n * s * dldu;
          }
        }
      });
}

}  // namespace guardnet
