#include "lorafit/injection.hpp"

#include <algorithm>
#include <limits>

#include "lorafit/error.hpp"
#include "lorafit/random.hpp"

namespace lorafit {

namespace {

bool is_layer_kind(const std::string& t) {
  return t == "query" || t == "key" || t == "value" || t == "output" || t == "ffn_in" ||
         t == "ffn_out";
}

ParamReport finish(std::size_t total, std::size_t trainable) {
  ParamReport r{total, trainable, std::numeric_limits<double>::infinity()};
  if (trainable > 0) r.ratio = static_cast<double>(total) / static_cast<double>(trainable);
  return r;
}

}  // namespace

std::vector<std::string> resolve_targets(const PairEncoder& model,
                                         const std::vector<std::string>& targets) {
  const std::vector<std::string> layers = model.linear_layers();
  std::vector<std::string> out;
  for (const std::string& t : targets) {
    bool matched = false;
    for (const std::string& name : layers) {
      const bool hit = is_layer_kind(t) ? name.ends_with("." + t) : name == t;
      if (hit) {
        matched = true;
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
      }
    }
    if (!matched) throw ValidationError("adapter target '" + t + "' matches no linear layer");
  }
  // Keep the encoder's own ordering regardless of how targets were listed.
  std::vector<std::string> ordered;
  for (const std::string& name : layers) {
    if (std::find(out.begin(), out.end(), name) != out.end()) ordered.push_back(name);
  }
  return ordered;
}

std::size_t effective_rank(std::size_t requested, std::size_t d, std::size_t k) {
  const std::size_t limit = std::min(d, k);
  if (requested == 0) throw RankError("adapter rank must be at least 1");
  if (limit < 2) {
    throw RankError("layer of shape " + std::to_string(d) + "x" + std::to_string(k) +
                    " is too narrow for a low-rank adapter");
  }
  return std::min(requested, limit - 1);
}

AdapterSet inject_adapters(const PairEncoder& model, const InjectionSpec& spec) {
  AdapterSet out;
  for (const std::string& name : resolve_targets(model, spec.targets)) {
    const Tensor& w = model.param(name);
    Rng rng(derive_seed(spec.seed, "adapter:" + name));
    const std::size_t r = effective_rank(spec.rank, w.rows(), w.cols());
    out.emplace(name, LoraAdapter::inject(w, r, rng, spec.scale));
  }
  return out;
}

ParamReport trainable_param_report(const PairEncoder& model, const AdapterSet& adapters) {
  std::size_t total = 0, trainable = 0;
  for (const auto& [name, t] : model.params()) {
    total += t.numel();
    if (!model.frozen(name)) trainable += t.numel();
  }
  for (const auto& [_, a] : adapters) {
    total += a.trainable_params();
    if (!a.merged()) trainable += a.trainable_params();
  }
  return finish(total, trainable);
}

ParamReport trainable_param_report(const AdapterSet& adapters) {
  std::size_t total = 0, trainable = 0;
  for (const auto& [_, a] : adapters) {
    total += a.base().numel() + a.trainable_params();
    if (!a.merged()) trainable += a.trainable_params();
  }
  return finish(total, trainable);
}

}  // namespace lorafit
