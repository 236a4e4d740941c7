#pragma once

#include <cstddef>
#include <span>

namespace lorafit {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricsReport {
  double acc = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

/// Tallies binary predictions against labels. Throws ValidationError on a
/// length mismatch or a value outside {0,1}.
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels);

/// ACC, F1 = 2tp / (2tp + fp + fn) and MCC. F1 is 0 when its denominator is
/// 0; MCC is 0 when any marginal is 0. Throws ValidationError on an empty
/// matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

}  // namespace lorafit
