#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lorafit/adapter.hpp"
#include "lorafit/encoder.hpp"
#include "lorafit/tensor.hpp"

namespace lorafit {

/// Separate step sizes for the A and B factors.
struct AdapterLearningRates {
  double alpha = 0.0;
  double beta = 0.0;
};

enum class PolicyKind { Fixed, GradNormScaled, GridSearched };

std::string_view to_string(PolicyKind kind);
/// Accepts "fixed", "grad_norm", "grid". Throws ConfigError otherwise.
PolicyKind parse_policy_kind(std::string_view text);

/// How (alpha, beta) are chosen.
///   Fixed          → (base_alpha, base_beta)
///   GradNormScaled → (base_alpha / (1 + ‖∇A‖_F), base_beta / (1 + ‖∇B‖_F))
///   GridSearched   → the grid pair with the best validation score
struct AdaptationPolicy {
  PolicyKind kind = PolicyKind::Fixed;
  double base_alpha = 0.05;
  double base_beta = 0.2;
  std::vector<AdapterLearningRates> grid;

  /// Rates must be positive; GridSearched needs a non-empty grid.
  void validate() const;
};

/// Maps candidate rates to a validation score (higher is better).
using ValidationScorer = std::function<double(const AdapterLearningRates&)>;

/// Picks the rates for one step. GridSearched requires `scorer` and evaluates
/// every grid entry once; ties go to the lowest index.
AdapterLearningRates adapt_rates(const AdaptationPolicy& policy, const Tensor& grad_a,
                                 const Tensor& grad_b, const ValidationScorer* scorer = nullptr);

/// A ← A - alpha·∇A, B ← B - beta·∇B. W0 is never touched.
void step_lora(LoraAdapter& adapter, const Tensor& grad_a, const Tensor& grad_b,
               const AdapterLearningRates& rates);

/// weight ← weight - rate·grad, shapes must match.
void step_dense(Tensor& weight, const Tensor& grad, double rate);

/// The two ablation switches. Each combination is one row of the ablation
/// table.
struct AblationConfig {
  bool use_adaptive_rates = true;
  bool use_lowrank = true;

  /// "Ours", "Remove adaptive learning rate", "Remove low-rank matrix updates"
  /// or "LORA".
  std::string_view row_name() const;
  /// Plain LoRA (both switches off) decides on S_cls alone; every other row
  /// uses the fused match score.
  bool density_scoring() const noexcept { return use_adaptive_rates || use_lowrank; }
  static AblationConfig from_row_name(std::string_view name);
  static std::vector<AblationConfig> all();
};

/// What a fine-tuning run trains and how its rates are chosen.
struct TrainingMode {
  enum class Structure { LowRank, Dense };

  Structure structure = Structure::LowRank;
  /// When false every update uses `shared_rate` and no policy is consulted.
  bool adaptive_rates = true;
  double shared_rate = 0.0;
  /// Dense layers made trainable (Dense structure only).
  std::vector<std::string> dense_targets;
  /// Plain LoRA scores with S_cls alone instead of the fused match score.
  bool density_scoring = true;
};

/// Configures `model` for the given ablation and returns the mode. For the
/// dense structure the `targets` layers are unfrozen in place.
TrainingMode apply_ablation(const AblationConfig& config, PairEncoder& model,
                            const std::vector<std::string>& targets, double base_lr);

/// Hands out per-step rates under a TrainingMode. Counts how often the
/// adaptation policy was consulted; non-adaptive modes never consult it.
class RateController {
 public:
  RateController(TrainingMode mode, AdaptationPolicy policy);

  /// Rates for one adapter (or one dense weight, passing its gradient twice).
  AdapterLearningRates rates(const Tensor& grad_a, const Tensor& grad_b);

  /// Runs the grid search once and pins its winner. No-op for other policies.
  void resolve_grid(const ValidationScorer& scorer);

  std::size_t adapt_calls() const noexcept { return adapt_calls_; }
  const AdaptationPolicy& policy() const noexcept { return policy_; }
  const TrainingMode& mode() const noexcept { return mode_; }

 private:
  TrainingMode mode_;
  AdaptationPolicy policy_;
  std::optional<AdapterLearningRates> pinned_;
  std::size_t adapt_calls_ = 0;
};

}  // namespace lorafit
