#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lorafit/adapter.hpp"
#include "lorafit/tape.hpp"
#include "lorafit/tensor.hpp"

namespace lorafit {

struct EncoderConfig {
  static constexpr std::size_t kNumClasses = 2;

  std::size_t vocab_size = 2048;
  std::size_t embed_dim = 64;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t ffn_dim = 128;
  std::size_t max_seq_len = 32;
  std::uint64_t seed = 0;

  /// Throws ValidationError on any non-positive size or when the heads do not
  /// divide the embedding width.
  void validate() const;
  std::size_t head_dim() const { return embed_dim / num_heads; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Small pre-LN transformer that encodes both sentences of a pair as one
/// joint sequence. Positions restart at zero for the second sentence and no
/// segment embedding is added, so two identical sentences produce identical
/// contextual rows.
///
/// Parameter names:
///   embed.token, embed.position,
///   layer{i}.{query,key,value,output,ffn_in,ffn_in_bias,ffn_out,ffn_out_bias},
///   classifier, classifier_bias
class PairEncoder {
 public:
  const EncoderConfig& config() const noexcept { return config_; }

  const std::map<std::string, Tensor>& params() const noexcept { return params_; }
  const Tensor& param(const std::string& name) const;
  /// Write access; StateError if the parameter is frozen.
  Tensor& mutable_param(const std::string& name);
  /// Write access regardless of freezing, for checkpoint loading.
  void set_param(const std::string& name, Tensor value);

  bool frozen(const std::string& name) const;
  void freeze(const std::string& name);
  void unfreeze(const std::string& name);
  void freeze_all();
  void unfreeze_all();
  std::vector<std::string> unfrozen() const;

  /// Names of the d×k projection matrices adapters can wrap, in layer order.
  std::vector<std::string> linear_layers() const;

  std::size_t param_count() const noexcept;

 private:
  friend PairEncoder build_encoder(const EncoderConfig& config);
  explicit PairEncoder(EncoderConfig config) : config_(config) {}

  EncoderConfig config_;
  std::map<std::string, Tensor> params_;
  std::set<std::string> unfrozen_;
};

/// Weights drawn from N(0, 0.02²) on the `seed` stream, biases zero. Every
/// parameter starts frozen.
PairEncoder build_encoder(const EncoderConfig& config);

/// One pair encoded on a tape.
struct PairGraph {
  ad::Var logits;  // 1×2
  ad::Var hidden;  // (len_a + len_b)×d last-layer rows
  std::size_t len_a = 0;
  std::size_t len_b = 0;
};

/// Binds a model (and optional adapters) to a tape. Frozen parameters become
/// constants, unfrozen ones variables; unmerged adapters contribute trainable
/// A, B factors and merged adapters their dense weight. Parameters are bound
/// once and shared by every pair encoded in the session.
class ForwardSession {
 public:
  ForwardSession(ad::Tape& tape, const PairEncoder& model, const AdapterSet* adapters = nullptr);

  PairGraph encode(std::span<const int> tokens_a, std::span<const int> tokens_b);

  /// Variables for unfrozen base parameters bound so far.
  const std::map<std::string, ad::Var>& dense_vars() const noexcept { return dense_; }
  const std::map<std::string, LoraAdapter::Bound>& adapter_vars() const noexcept {
    return bound_adapters_;
  }

 private:
  ad::Var param(const std::string& name);
  ad::Var project(ad::Var x, const std::string& name);
  ad::Var embed(std::span<const int> tokens);

  ad::Tape& tape_;
  const PairEncoder& model_;
  const AdapterSet* adapters_;
  std::map<std::string, ad::Var> bound_;
  std::map<std::string, ad::Var> dense_;
  std::map<std::string, LoraAdapter::Bound> bound_adapters_;
};

struct PairOutput {
  Tensor logits;      // 1×2
  Tensor similarity;  // len_a×len_b
};

/// Logits plus the cosine-similarity matrix between the last-layer rows of
/// sentence A and sentence B.
PairOutput forward_pair(const PairEncoder& model, std::span<const int> tokens_a,
                        std::span<const int> tokens_b, const AdapterSet* adapters = nullptr);

/// Cosine similarities between rows [0, len_a) and rows [len_a, end) of
/// `hidden`, clamped to [-1, 1].
Tensor similarity_matrix(const Tensor& hidden, std::size_t len_a);

/// Softmax probability of the duplicate class (index 1).
double classification_score(const Tensor& logits);

}  // namespace lorafit
