#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "guardnet/tape.hpp"

namespace guardnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds a scalar loss on the given tape. Parameters must be bound through
// tape.param() so the checker can read their gradients.
using LossFn = std::function<Var<double>(Tape<double>&)>;

/// Compares backward() against central differences for every element of
/// every tensor in `params`. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8). The tensors are perturbed in place and
/// restored before returning.
GradCheckReport finite_diff_check(const LossFn& f, const std::vector<Tensor64*>& params,
                                  double h = 1e-5, double tol = 1e-4);

/// Single-input form: f receives x as a grad-requiring leaf.
GradCheckReport finite_diff_check(const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                                  const Tensor64& x, double h = 1e-5, double tol = 1e-4);

}  // namespace guardnet
