#include "lorafit/metrics.hpp"

#include <cmath>
#include <string>

#include "lorafit/error.hpp"

namespace lorafit {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw ValidationError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      throw ValidationError("confusion: values must be 0 or 1 (index " + std::to_string(i) + ")");
    }
    if (p == 1 && y == 1) ++cm.tp;
    else if (p == 0 && y == 0) ++cm.tn;
    else if (p == 1) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("metrics of an empty confusion matrix");
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
  const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  MetricsReport r;
  r.acc = (tp + tn) / static_cast<double>(cm.total());
  const double f1_den = 2.0 * tp + fp + fn;
  r.f1 = f1_den > 0.0 ? 2.0 * tp / f1_den : 0.0;
  const double m1 = tp + fp, m2 = tp + fn, m3 = tn + fp, m4 = tn + fn;
  if (m1 > 0.0 && m2 > 0.0 && m3 > 0.0 && m4 > 0.0) {
    r.mcc = (tp * tn - fp * fn) / std::sqrt(m1 * m2 * m3 * m4);
  }
  return r;
}

}  // namespace lorafit
