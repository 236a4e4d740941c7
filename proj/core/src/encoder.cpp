#include "lorafit/encoder.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "lorafit/error.hpp"
#include "lorafit/ops.hpp"
#include "lorafit/random.hpp"

namespace lorafit {

namespace {

constexpr double kInitStddev = 0.02;

std::string layer_param(std::size_t layer, const char* suffix) {
  return "layer" + std::to_string(layer) + "." + suffix;
}

}  // namespace

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValidationError(std::string("encoder ") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(embed_dim, "embed_dim");
  positive(num_heads, "num_heads");
  positive(num_layers, "num_layers");
  positive(ffn_dim, "ffn_dim");
  positive(max_seq_len, "max_seq_len");
  if (embed_dim % num_heads != 0) {
    throw ValidationError("encoder embed_dim " + std::to_string(embed_dim) +
                          " is not divisible by num_heads " + std::to_string(num_heads));
  }
}

const Tensor& PairEncoder::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown encoder parameter '" + name + "'");
  return it->second;
}

Tensor& PairEncoder::mutable_param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown encoder parameter '" + name + "'");
  if (!unfrozen_.contains(name)) throw StateError("parameter '" + name + "' is frozen");
  return it->second;
}

void PairEncoder::set_param(const std::string& name, Tensor value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown encoder parameter '" + name + "'");
  if (!it->second.same_shape(value)) {
    throw ShapeError("parameter '" + name + "' expects " + to_string(it->second.shape()) +
                     ", got " + to_string(value.shape()));
  }
  it->second = std::move(value);
}

bool PairEncoder::frozen(const std::string& name) const {
  param(name);
  return !unfrozen_.contains(name);
}

void PairEncoder::freeze(const std::string& name) {
  param(name);
  unfrozen_.erase(name);
}

void PairEncoder::unfreeze(const std::string& name) {
  param(name);
  unfrozen_.insert(name);
}

void PairEncoder::freeze_all() { unfrozen_.clear(); }

void PairEncoder::unfreeze_all() {
  for (const auto& [name, _] : params_) unfrozen_.insert(name);
}

std::vector<std::string> PairEncoder::unfrozen() const {
  return {unfrozen_.begin(), unfrozen_.end()};
}

std::vector<std::string> PairEncoder::linear_layers() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    for (const char* s : {"query", "key", "value", "output", "ffn_in", "ffn_out"}) {
      names.push_back(layer_param(l, s));
    }
  }
  names.emplace_back("classifier");
  return names;
}

std::size_t PairEncoder::param_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

PairEncoder build_encoder(const EncoderConfig& config) {
  config.validate();
  PairEncoder model(config);
  Rng rng(derive_seed(config.seed, "init"));
  const std::size_t d = config.embed_dim;
  auto add = [&](const std::string& name, Shape shape, bool weight) {
    model.params_.emplace(name, weight ? gaussian(std::move(shape), kInitStddev, rng)
                                       : Tensor::zeros(std::move(shape)));
  };
  // Insertion order fixes the order in which the generator is consumed.
  add("embed.token", {config.vocab_size, d}, true);
  add("embed.position", {config.max_seq_len, d}, true);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    add(layer_param(l, "query"), {d, d}, true);
    add(layer_param(l, "key"), {d, d}, true);
    add(layer_param(l, "value"), {d, d}, true);
    add(layer_param(l, "output"), {d, d}, true);
    add(layer_param(l, "ffn_in"), {d, config.ffn_dim}, true);
    add(layer_param(l, "ffn_in_bias"), {1, config.ffn_dim}, false);
    add(layer_param(l, "ffn_out"), {config.ffn_dim, d}, true);
    add(layer_param(l, "ffn_out_bias"), {1, d}, false);
  }
  add("classifier", {2 * d, EncoderConfig::kNumClasses}, true);
  add("classifier_bias", {1, EncoderConfig::kNumClasses}, false);
  return model;
}

ForwardSession::ForwardSession(ad::Tape& tape, const PairEncoder& model, const AdapterSet* adapters)
    : tape_(tape), model_(model), adapters_(adapters) {}

ad::Var ForwardSession::param(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Tensor& value = model_.param(name);
  ad::Var v;
  if (model_.frozen(name)) {
    v = tape_.constant(value);
  } else {
    v = tape_.variable(value);
    dense_.emplace(name, v);
  }
  bound_.emplace(name, v);
  return v;
}

ad::Var ForwardSession::project(ad::Var x, const std::string& name) {
  if (adapters_) {
    if (auto it = adapters_->find(name); it != adapters_->end()) {
      const LoraAdapter& adapter = it->second;
      if (adapter.merged()) {
        auto b = bound_.find(name);
        if (b == bound_.end()) b = bound_.emplace(name, tape_.constant(adapter.merged_weight())).first;
        return ad::matmul(x, b->second);
      }
      auto b = bound_adapters_.find(name);
      if (b == bound_adapters_.end()) b = bound_adapters_.emplace(name, adapter.bind(tape_)).first;
      return adapter.forward(x, b->second);
    }
  }
  return ad::matmul(x, param(name));
}

ad::Var ForwardSession::embed(std::span<const int> tokens) {
  const EncoderConfig& cfg = model_.config();
  if (tokens.empty()) throw ValidationError("cannot encode an empty token sequence");
  if (tokens.size() > cfg.max_seq_len) {
    throw ValidationError("sequence of " + std::to_string(tokens.size()) +
                          " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(cfg.vocab_size));
    }
  }
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);

  auto lookup = [&](const std::string& name, std::span<const int> ids) {
    if (!model_.frozen(name)) return ad::gather_rows(param(name), ids);
    // Frozen tables are gathered directly instead of copying the whole table
    // onto the tape.
    const Tensor& table = model_.param(name);
    const std::size_t d = table.cols();
    Tensor rows({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy(table.data() + ids[i] * d, table.data() + (ids[i] + 1) * d, rows.data() + i * d);
    }
    return tape_.constant(std::move(rows));
  };
  return ad::add(lookup("embed.token", tokens), lookup("embed.position", positions));
}

PairGraph ForwardSession::encode(std::span<const int> tokens_a, std::span<const int> tokens_b) {
  const EncoderConfig& cfg = model_.config();
  const std::array<ad::Var, 2> pieces{embed(tokens_a), embed(tokens_b)};
  ad::Var x = ad::concat_rows(pieces);

  const std::size_t dh = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    ad::Var h = ad::layer_norm_rows(x);
    ad::Var q = project(h, layer_param(l, "query"));
    ad::Var k = project(h, layer_param(l, "key"));
    ad::Var v = project(h, layer_param(l, "value"));
    std::vector<ad::Var> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t hd = 0; hd < cfg.num_heads; ++hd) {
      const std::size_t c0 = hd * dh, c1 = c0 + dh;
      ad::Var qh = ad::slice_cols(q, c0, c1);
      ad::Var kh = ad::slice_cols(k, c0, c1);
      ad::Var vh = ad::slice_cols(v, c0, c1);
      ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
      heads.push_back(ad::matmul(ad::softmax_rows(scores), vh));
    }
    x = ad::add(x, project(ad::concat_cols(heads), layer_param(l, "output")));

    ad::Var h2 = ad::layer_norm_rows(x);
    ad::Var f = ad::relu(
        ad::add_row_vector(project(h2, layer_param(l, "ffn_in")), param(layer_param(l, "ffn_in_bias"))));
    x = ad::add(x, ad::add_row_vector(project(f, layer_param(l, "ffn_out")),
                                      param(layer_param(l, "ffn_out_bias"))));
  }
  ad::Var z = ad::layer_norm_rows(x);

  const std::size_t la = tokens_a.size(), lb = tokens_b.size();
  const std::array<ad::Var, 2> pooled{ad::mean_rows(ad::slice_rows(z, 0, la)),
                                      ad::mean_rows(ad::slice_rows(z, la, la + lb))};
  ad::Var logits =
      ad::add_row_vector(project(ad::concat_cols(pooled), "classifier"), param("classifier_bias"));
  return PairGraph{logits, z, la, lb};
}

Tensor similarity_matrix(const Tensor& hidden, std::size_t len_a) {
  const std::size_t total = hidden.rows(), d = hidden.cols();
  if (len_a == 0 || len_a >= total) {
    throw ShapeError("similarity_matrix: split " + std::to_string(len_a) + " invalid for " +
                     to_string(hidden.shape()));
  }
  const std::size_t len_b = total - len_a;
  std::vector<double> norms(total);
  for (std::size_t i = 0; i < total; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += hidden(i, j) * hidden(i, j);
    norms[i] = std::sqrt(s);
  }
  Tensor sim({len_a, len_b});
  for (std::size_t i = 0; i < len_a; ++i) {
    for (std::size_t j = 0; j < len_b; ++j) {
      const std::size_t r = len_a + j;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += hidden(i, c) * hidden(r, c);
      const double denom = norms[i] * norms[r];
      const double cos = denom > 0.0 ? dot / denom : 0.0;
      sim(i, j) = std::clamp(cos, -1.0, 1.0);
    }
  }
  return sim;
}

PairOutput forward_pair(const PairEncoder& model, std::span<const int> tokens_a,
                        std::span<const int> tokens_b, const AdapterSet* adapters) {
  ad::Tape tape;
  ForwardSession session(tape, model, adapters);
  PairGraph g = session.encode(tokens_a, tokens_b);
  return PairOutput{g.logits.value(), similarity_matrix(g.hidden.value(), g.len_a)};
}

double classification_score(const Tensor& logits) {
  if (logits.numel() != EncoderConfig::kNumClasses) {
    throw ShapeError("classification_score expects two logits, got " + to_string(logits.shape()));
  }
  const double z0 = logits[0], z1 = logits[1];
  // σ(z1 - z0), evaluated on the side that cannot overflow
  const double t = z1 - z0;
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace lorafit
