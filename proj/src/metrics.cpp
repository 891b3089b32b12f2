#include "guardnet/metrics.hpp"

#include <string>

#include "guardnet/error.hpp"

namespace guardnet {

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
  if (preds.size() != labels.size()) {
    throw UsageError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw UsageError("confusion: no samples");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0, y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

Metrics metrics(const Confusion& c) {
  const std::size_t n = c.total();
  if (n == 0) throw UsageError("metrics: empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
  m.f1_positive = f1_score(c.tp, c.fp, c.fn);
  // For the benign class the roles flip: tn are its hits, fn its false alarms.
  m.f1_negative = f1_score(c.tn, c.fn, c.fp);
  m.macro_f1 = (m.f1_positive + m.f1_negative) / 2.0;
  if (c.fp + c.tn > 0) m.fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  if (c.fn + c.tp > 0) m.fnr = static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp);
  return m;
}

}  // namespace guardnet
