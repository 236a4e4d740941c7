#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lorafit/adapter.hpp"
#include "lorafit/encoder.hpp"

namespace lorafit {

struct InjectionSpec {
  /// Layer kinds to wrap. "query", "key", "value", "output", "ffn_in" and
  /// "ffn_out" select that projection in every layer; anything else must be a
  /// full parameter name such as "classifier" or "layer1.value".
  std::vector<std::string> targets{"query", "value", "classifier"};
  std::size_t rank = 4;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

/// Full parameter names selected by `targets`, in the encoder's layer order.
std::vector<std::string> resolve_targets(const PairEncoder& model,
                                         const std::vector<std::string>& targets);

/// Rank used for a d×k layer: `requested`, lowered to min(d, k) - 1 when the
/// layer is too narrow (the 2-column classifier gets rank 1).
std::size_t effective_rank(std::size_t requested, std::size_t d, std::size_t k);

/// Wraps every resolved target in a fresh adapter. Factor A of each target is
/// drawn from its own sub-stream of `spec.seed`.
AdapterSet inject_adapters(const PairEncoder& model, const InjectionSpec& spec);

struct ParamReport {
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;
  /// total / trainable; +inf when nothing is trainable.
  double ratio = 0.0;
};

/// Counts every encoder parameter plus every adapter factor. Trainable means
/// unfrozen base parameters and factors of unmerged adapters.
ParamReport trainable_param_report(const PairEncoder& model, const AdapterSet& adapters);

/// Same accounting for bare adapters: each adapter contributes its frozen
/// base d·k to the total and r·(d + k) trainable factors.
ParamReport trainable_param_report(const AdapterSet& adapters);

}  // namespace lorafit
