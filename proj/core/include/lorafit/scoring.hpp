#pragma once

#include <cstddef>
#include <span>

#include "lorafit/tensor.hpp"

namespace lorafit {

/// Mixing weights of the match score: alpha_mix blends length balance with
/// alignment density, beta_loc weighs the position-matching term.
struct ScoreFusionWeights {
  double alpha_mix = 0.5;
  double beta_loc = 0.2;

  void validate() const;
};

struct DensityFeatures {
  double area_weight = 1.0;     // w_s ∈ (0, 1]
  double target_density = 0.0;  // d_j ∈ [0, 1]
  double location_score = 0.0;  // S_loc ∈ [-1, 1]

  void validate() const;
};

/// Fraction of tokens, counted over both sentences, whose best match on the
/// other side has similarity strictly above `threshold`.
double target_density(const Tensor& sim, double threshold);

/// min(len_a, len_b) / max(len_a, len_b).
double area_weight(std::size_t len_a, std::size_t len_b);

/// 0.5 · (mean of row maxima + mean of column maxima).
double location_score(const Tensor& sim);

DensityFeatures density_features(const Tensor& sim, double density_threshold);

/// (alpha_mix·w_s + (1 - alpha_mix)·d_j) · S_cls + beta_loc · S_loc.
/// Throws ValidationError for out-of-range inputs.
double fuse_match_score(double s_cls, const DensityFeatures& feats, const ScoreFusionWeights& w);

/// 1 iff score ≥ threshold.
int decide(double s_match, double decision_threshold) noexcept;

/// Decision threshold maximizing accuracy over a sweep of candidates spaced
/// `step` apart, covering [floor(min score), ceil(max score)] on that grid.
/// Ties go to the smallest threshold.
double calibrate_threshold(std::span<const double> scores, std::span<const int> labels,
                           double step = 0.001);

}  // namespace lorafit
