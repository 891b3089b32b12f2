#include "guardnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace guardnet {
namespace {

double eval_loss(const LossFn& f) {
  Tape<double> tape(false);
  Var<double> loss = f(tape);
  if (loss.value().size() != 1) throw UsageError("finite_diff_check needs a scalar-valued function");
  return loss.value()[0];
}

}  // namespace

GradCheckReport finite_diff_check(const LossFn& f, const std::vector<Tensor64*>& params, double h, double tol) {
  std::vector<Tensor64> analytic;
  {
    Tape<double> tape(true);
    Var<double> loss = f(tape);
    if (loss.value().size() != 1) throw UsageError("finite_diff_check needs a scalar-valued function");
    tape.backward(loss);
    for (const Tensor64* p : params) analytic.push_back(tape.grad_of(*p));
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor64& p = *params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = eval_loss(f);
      p[i] = saved - h;
      const double down = eval_loss(f);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_err || report.checked == 1) {
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (rel >= report.max_rel_err) {
          report.worst_tensor = t;
          report.worst_index = i;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

GradCheckReport finite_diff_check(const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                                  const Tensor64& x, double h, double tol) {
  Tensor64 input = x;
  LossFn wrapped = [&](Tape<double>& tape) { return f(tape, tape.param(input)); };
  return finite_diff_check(wrapped, {&input}, h, tol);
}

}  // namespace guardnet
