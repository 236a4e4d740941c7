#include "lorafit/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lorafit/error.hpp"

namespace lorafit {

namespace {

void require_nonempty(const Tensor& sim, const char* op) {
  if (sim.numel() == 0) throw ValidationError(std::string(op) + ": empty sequence");
  if (sim.rank() != 2) {
    throw ShapeError(std::string(op) + ": similarity must be a matrix, got " +
                     to_string(sim.shape()));
  }
}

std::vector<double> row_max(const Tensor& sim) {
  std::vector<double> out(sim.rows(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < sim.rows(); ++i)
    for (std::size_t j = 0; j < sim.cols(); ++j) out[i] = std::max(out[i], sim(i, j));
  return out;
}

std::vector<double> col_max(const Tensor& sim) {
  std::vector<double> out(sim.cols(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < sim.rows(); ++i)
    for (std::size_t j = 0; j < sim.cols(); ++j) out[j] = std::max(out[j], sim(i, j));
  return out;
}

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) {
    throw ValidationError(std::string(name) + " = " + std::to_string(v) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

void ScoreFusionWeights::validate() const {
  check_range(alpha_mix, 0.0, 1.0, "alpha_mix");
  if (!(beta_loc >= 0.0) || !std::isfinite(beta_loc)) {
    throw ValidationError("beta_loc must be a finite non-negative number");
  }
}

void DensityFeatures::validate() const {
  if (!(area_weight > 0.0 && area_weight <= 1.0)) {
    throw ValidationError("area weight " + std::to_string(area_weight) + " outside (0, 1]");
  }
  check_range(target_density, 0.0, 1.0, "target density");
  check_range(location_score, -1.0, 1.0, "location score");
}

double target_density(const Tensor& sim, double threshold) {
  require_nonempty(sim, "target_density");
  if (!(threshold > -1.0 && threshold < 1.0)) {
    throw ValidationError("alignment threshold must lie in (-1, 1)");
  }
  std::size_t aligned = 0;
  for (double m : row_max(sim)) aligned += m > threshold ? 1 : 0;
  for (double m : col_max(sim)) aligned += m > threshold ? 1 : 0;
  return static_cast<double>(aligned) / static_cast<double>(sim.rows() + sim.cols());
}

double area_weight(std::size_t len_a, std::size_t len_b) {
  if (len_a == 0 || len_b == 0) throw ValidationError("area_weight: zero-length sequence");
  return static_cast<double>(std::min(len_a, len_b)) / static_cast<double>(std::max(len_a, len_b));
}

double location_score(const Tensor& sim) {
  require_nonempty(sim, "location_score");
  const auto rows = row_max(sim);
  const auto cols = col_max(sim);
  double rs = 0.0, cs = 0.0;
  for (double v : rows) rs += v;
  for (double v : cols) cs += v;
  const double s = 0.5 * (rs / static_cast<double>(rows.size()) + cs / static_cast<double>(cols.size()));
  return std::clamp(s, -1.0, 1.0);
}

DensityFeatures density_features(const Tensor& sim, double density_threshold) {
  return DensityFeatures{area_weight(sim.rows(), sim.cols()), target_density(sim, density_threshold),
                         location_score(sim)};
}

double fuse_match_score(double s_cls, const DensityFeatures& feats, const ScoreFusionWeights& w) {
  check_range(s_cls, 0.0, 1.0, "S_cls");
  feats.validate();
  w.validate();
  return (w.alpha_mix * feats.area_weight + (1.0 - w.alpha_mix) * feats.target_density) * s_cls +
         w.beta_loc * feats.location_score;
}

int decide(double s_match, double decision_threshold) noexcept {
  return s_match >= decision_threshold ? 1 : 0;
}

double calibrate_threshold(std::span<const double> scores, std::span<const int> labels, double step) {
  if (scores.size() != labels.size()) {
    throw ValidationError("calibrate_threshold: score and label counts differ");
  }
  if (scores.empty()) throw ValidationError("calibrate_threshold: no examples");
  if (!(step > 0.0)) throw ValidationError("calibrate_threshold: step must be positive");

  // Sort once, then sweep the grid upward counting how many scores fall
  // below each candidate.
  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(scores.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    sorted.emplace_back(scores[i], labels[i]);
    positives += labels[i] == 1 ? 1 : 0;
  }
  std::sort(sorted.begin(), sorted.end());

  const auto lo = static_cast<long long>(std::floor(sorted.front().first / step));
  const auto hi = static_cast<long long>(std::ceil(sorted.back().first / step));
  double best_threshold = static_cast<double>(lo) * step;
  std::size_t best_correct = 0;
  std::size_t below = 0, below_neg = 0;
  for (long long g = lo; g <= hi; ++g) {
    const double t = static_cast<double>(g) * step;
    while (below < sorted.size() && sorted[below].first < t) {
      below_neg += sorted[below].second == 0 ? 1 : 0;
      ++below;
    }
    const std::size_t above_pos = positives - (below - below_neg);
    const std::size_t correct = below_neg + above_pos;
    if (correct > best_correct) {
      best_correct = correct;
      best_threshold = t;
    }
  }
  return best_threshold;
}

}  // namespace lorafit
