#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "lorafit/random.hpp"
#include "lorafit/tape.hpp"
#include "lorafit/tensor.hpp"

namespace lorafit {

/// Low-rank adapter around a frozen d×k weight W0:
///
///   W_eff = W0 + s · A · Bᵀ,   A: d×r,  B: k×r,  1 ≤ r < min(d, k)
///
/// A starts Gaussian (std 0.02) and B starts at zero, so a fresh adapter
/// computes exactly x · W0. While merged, the factors are read-only and the
/// low-rank forward path is unavailable.
class LoraAdapter {
 public:
  /// Tape handles for one forward pass. W0 is always a constant.
  struct Bound {
    ad::Var base;
    ad::Var a;
    ad::Var b;
  };

  static constexpr double kInitStddev = 0.02;

  /// Wraps `layer_weight` (d×k) with rank-`rank` factors.
  /// Throws RankError unless 1 ≤ rank < min(d, k).
  static LoraAdapter inject(const Tensor& layer_weight, std::size_t rank, Rng& rng,
                            double scale = 1.0);

  /// Rebuilds an unmerged adapter from stored factors (checkpoint loading).
  static LoraAdapter from_factors(Tensor base, Tensor a, Tensor b, double scale);

  std::size_t input_dim() const noexcept { return base_.shape()[0]; }
  std::size_t output_dim() const noexcept { return base_.shape()[1]; }
  std::size_t rank() const noexcept { return a_.shape()[1]; }
  double scale() const noexcept { return scale_; }
  bool merged() const noexcept { return merged_; }

  const Tensor& base() const noexcept { return base_; }
  const Tensor& a() const noexcept { return a_; }
  const Tensor& b() const noexcept { return b_; }

  /// Mutable factors for an optimizer step. StateError while merged.
  Tensor& mutable_a();
  Tensor& mutable_b();
  /// Replaces both factors (shape-checked). StateError while merged.
  void set_factors(Tensor a, Tensor b);

  /// x · W0 + s · (x · A) · Bᵀ without forming the dense d×k delta.
  Tensor forward(const Tensor& x) const;

  /// Places W0 (constant) and A, B (trainable) on `tape`.
  Bound bind(ad::Tape& tape) const;
  ad::Var forward(ad::Var x, const Bound& vars) const;

  /// s · A · Bᵀ as a dense d×k matrix.
  Tensor delta() const;

  /// Returns W0 + s · A · Bᵀ and enters the merged state.
  Tensor merge();
  /// Leaves the merged state, restoring W0 from the retained copy.
  /// `merged_weight` must be the d×k matrix handed out by merge().
  void unmerge(const Tensor& merged_weight);
  /// Dense weight held while merged.
  const Tensor& merged_weight() const;

  std::size_t trainable_params() const noexcept { return rank() * (input_dim() + output_dim()); }

 private:
  LoraAdapter(Tensor base, Tensor a, Tensor b, double scale);

  Tensor base_;
  Tensor a_;
  Tensor b_;
  Tensor merged_weight_;
  double scale_ = 1.0;
  bool merged_ = false;
};

/// Adapters keyed by the name of the layer they wrap.
using AdapterSet = std::map<std::string, LoraAdapter>;

}  // namespace lorafit
