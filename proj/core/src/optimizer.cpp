#include "lorafit/optimizer.hpp"

#include "lorafit/error.hpp"
#include "lorafit/tensor_ops.hpp"

namespace lorafit {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Fixed: return "fixed";
    case PolicyKind::GradNormScaled: return "grad_norm";
    case PolicyKind::GridSearched: return "grid";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "fixed") return PolicyKind::Fixed;
  if (text == "grad_norm") return PolicyKind::GradNormScaled;
  if (text == "grid") return PolicyKind::GridSearched;
  throw ConfigError("unknown adaptation policy '" + std::string(text) +
                    "' (expected fixed, grad_norm or grid)");
}

void AdaptationPolicy::validate() const {
  if (!(base_alpha > 0.0) || !(base_beta > 0.0)) {
    throw ConfigError("adaptation policy needs positive base_alpha and base_beta");
  }
  if (kind == PolicyKind::GridSearched) {
    if (grid.empty()) throw ConfigError("grid-searched policy needs a non-empty grid");
    for (const auto& g : grid) {
      if (!(g.alpha > 0.0) || !(g.beta > 0.0)) {
        throw ConfigError("grid entries must have positive alpha and beta");
      }
    }
  }
}

AdapterLearningRates adapt_rates(const AdaptationPolicy& policy, const Tensor& grad_a,
                                 const Tensor& grad_b, const ValidationScorer* scorer) {
  switch (policy.kind) {
    case PolicyKind::Fixed:
      return {policy.base_alpha, policy.base_beta};
    case PolicyKind::GradNormScaled:
      return {policy.base_alpha / (1.0 + frobenius_norm(grad_a)),
              policy.base_beta / (1.0 + frobenius_norm(grad_b))};
    case PolicyKind::GridSearched: {
      if (scorer == nullptr || !*scorer) {
        throw ConfigError("grid-searched rates need a validation scorer");
      }
      if (policy.grid.empty()) throw ConfigError("grid-searched policy needs a non-empty grid");
      std::size_t best = 0;
      double best_score = (*scorer)(policy.grid[0]);
      for (std::size_t i = 1; i < policy.grid.size(); ++i) {
        const double s = (*scorer)(policy.grid[i]);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      return policy.grid[best];
    }
  }
  throw ConfigError("unknown adaptation policy");
}

void step_lora(LoraAdapter& adapter, const Tensor& grad_a, const Tensor& grad_b,
               const AdapterLearningRates& rates) {
  if (adapter.merged()) throw StateError("step_lora on a merged adapter");
  if (!grad_a.same_shape(adapter.a()) || !grad_b.same_shape(adapter.b())) {
    throw ShapeError("step_lora: gradients " + to_string(grad_a.shape()) + ", " +
                     to_string(grad_b.shape()) + " do not match factors " +
                     to_string(adapter.a().shape()) + ", " + to_string(adapter.b().shape()));
  }
  ops::axpy(adapter.mutable_a(), -rates.alpha, grad_a);
  ops::axpy(adapter.mutable_b(), -rates.beta, grad_b);
}

void step_dense(Tensor& weight, const Tensor& grad, double rate) {
  if (!grad.same_shape(weight)) {
    throw ShapeError("step_dense: gradient " + to_string(grad.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  ops::axpy(weight, -rate, grad);
}

std::string_view AblationConfig::row_name() const {
  if (use_adaptive_rates && use_lowrank) return "Ours";
  if (!use_adaptive_rates && use_lowrank) return "Remove adaptive learning rate";
  if (use_adaptive_rates && !use_lowrank) return "Remove low-rank matrix updates";
  return "LORA";
}

AblationConfig AblationConfig::from_row_name(std::string_view name) {
  for (const AblationConfig& c : all()) {
    if (c.row_name() == name) return c;
  }
  throw ConfigError("unknown ablation configuration '" + std::string(name) + "'");
}

std::vector<AblationConfig> AblationConfig::all() {
  return {{true, true}, {false, true}, {true, false}, {false, false}};
}

TrainingMode apply_ablation(const AblationConfig& config, PairEncoder& model,
                            const std::vector<std::string>& targets, double base_lr) {
  TrainingMode mode;
  mode.adaptive_rates = config.use_adaptive_rates;
  mode.shared_rate = base_lr;
  mode.density_scoring = config.density_scoring();
  if (config.use_lowrank || !config.use_adaptive_rates) {
    mode.structure = TrainingMode::Structure::LowRank;
  } else {
    mode.structure = TrainingMode::Structure::Dense;
    mode.dense_targets = targets;
    for (const std::string& name : targets) model.unfreeze(name);
  }
  return mode;
}

RateController::RateController(TrainingMode mode, AdaptationPolicy policy)
    : mode_(std::move(mode)), policy_(std::move(policy)) {
  if (mode_.adaptive_rates) policy_.validate();
  if (!mode_.adaptive_rates && !(mode_.shared_rate > 0.0)) {
    throw ConfigError("a shared learning rate must be positive");
  }
}

AdapterLearningRates RateController::rates(const Tensor& grad_a, const Tensor& grad_b) {
  if (!mode_.adaptive_rates) return {mode_.shared_rate, mode_.shared_rate};
  if (pinned_) return *pinned_;
  if (policy_.kind == PolicyKind::GridSearched) {
    throw StateError("grid-searched rates must be resolved before training");
  }
  ++adapt_calls_;
  return adapt_rates(policy_, grad_a, grad_b);
}

void RateController::resolve_grid(const ValidationScorer& scorer) {
  if (!mode_.adaptive_rates || policy_.kind != PolicyKind::GridSearched) return;
  ++adapt_calls_;
  const Tensor none = Tensor::scalar(0.0);
  pinned_ = adapt_rates(policy_, none, none, &scorer);
}

}  // namespace lorafit
