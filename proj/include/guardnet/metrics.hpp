#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace guardnet {

// Positive class = malicious.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double f1_positive = 0.0;
  double f1_negative = 0.0;
  std::optional<double> fpr;  // empty when fp + tn == 0
  std::optional<double> fnr;  // empty when fn + tp == 0

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Confusion confusion(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);

// F1 of one class from its tp/fp/fn; 0 when the class is absent from both truth and predictions.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn);

Metrics metrics(const Confusion& c);

}  // namespace guardnet
