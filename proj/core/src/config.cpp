#include "lorafit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lorafit/error.hpp"

namespace lorafit {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                    expected);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> to_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto comma = v.find(',', start);
    if (comma == std::string_view::npos) comma = v.size();
    auto item = trim(v.substr(start, comma - start));
    if (!item.empty()) out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ",";
    out += s;
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = to_size(k, v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = to_double(k, v); },
          [member](const RunConfig& c) { return fmt(c.*member); }};
}

Field encoder_field(std::size_t EncoderConfig::*member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) {
            c.encoder.*member = to_size(k, v);
          },
          [member](const RunConfig& c) { return std::to_string(c.encoder.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields = {
      {"seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.seed = to_u64(k, v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"data.source",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          if (v != "synthetic" && v != "tsv") bad_value(k, v, "'synthetic' or 'tsv'");
          c.data_source = std::string(v);
        },
        [](const RunConfig& c) { return c.data_source; }}},
      {"data.n", size_field(&RunConfig::data_n)},
      {"data.path",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.data_path = std::string(v); },
        [](const RunConfig& c) { return c.data_path.string(); }}},
      {"data.val_fraction", double_field(&RunConfig::val_fraction)},
      {"data.test_fraction", double_field(&RunConfig::test_fraction)},
      {"pretrain.n", size_field(&RunConfig::pretrain_n)},
      {"pretrain.epochs", size_field(&RunConfig::pretrain_epochs)},
      {"pretrain.lr", double_field(&RunConfig::pretrain_lr)},
      {"encoder.vocab_size", encoder_field(&EncoderConfig::vocab_size)},
      {"encoder.embed_dim", encoder_field(&EncoderConfig::embed_dim)},
      {"encoder.num_heads", encoder_field(&EncoderConfig::num_heads)},
      {"encoder.num_layers", encoder_field(&EncoderConfig::num_layers)},
      {"encoder.ffn_dim", encoder_field(&EncoderConfig::ffn_dim)},
      {"encoder.max_seq_len", encoder_field(&EncoderConfig::max_seq_len)},
      {"adapter.rank", size_field(&RunConfig::rank)},
      {"adapter.scale", double_field(&RunConfig::adapter_scale)},
      {"adapter.targets",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.targets = to_list(v); },
        [](const RunConfig& c) { return join(c.targets); }}},
      {"optim.policy",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.policy.kind = parse_policy_kind(v); },
        [](const RunConfig& c) { return std::string(to_string(c.policy.kind)); }}},
      {"optim.base_alpha",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.policy.base_alpha = to_double(k, v); },
        [](const RunConfig& c) { return fmt(c.policy.base_alpha); }}},
      {"optim.base_beta",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.policy.base_beta = to_double(k, v); },
        [](const RunConfig& c) { return fmt(c.policy.base_beta); }}},
      {"optim.base_lr", double_field(&RunConfig::base_lr)},
      {"optim.grid",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.policy.grid.clear();
          for (const std::string& item : to_list(v)) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) bad_value(k, item, "an alpha:beta pair");
            c.policy.grid.push_back({to_double(k, trim(std::string_view(item).substr(0, colon))),
                                     to_double(k, trim(std::string_view(item).substr(colon + 1)))});
          }
        },
        [](const RunConfig& c) {
          std::vector<std::string> items;
          for (const auto& g : c.policy.grid) items.push_back(fmt(g.alpha) + ":" + fmt(g.beta));
          return join(items);
        }}},
      {"score.alpha_mix",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.fusion.alpha_mix = to_double(k, v); },
        [](const RunConfig& c) { return fmt(c.fusion.alpha_mix); }}},
      {"score.beta_loc",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.fusion.beta_loc = to_double(k, v); },
        [](const RunConfig& c) { return fmt(c.fusion.beta_loc); }}},
      {"score.density_threshold", double_field(&RunConfig::density_threshold)},
      {"score.decision_threshold",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "calibrate") {
            c.decision_threshold.reset();
          } else {
            c.decision_threshold = to_double(k, v);
          }
        },
        [](const RunConfig& c) {
          return c.decision_threshold ? fmt(*c.decision_threshold) : std::string("calibrate");
        }}},
      {"ablation.use_adaptive_rates",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.ablation.use_adaptive_rates = to_bool(k, v);
        },
        [](const RunConfig& c) { return std::string(c.ablation.use_adaptive_rates ? "true" : "false"); }}},
      {"ablation.use_lowrank",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.ablation.use_lowrank = to_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.ablation.use_lowrank ? "true" : "false"); }}},
      {"train.epochs", size_field(&RunConfig::epochs)},
      {"train.batch_size", size_field(&RunConfig::batch_size)},
      {"model.checkpoint",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.checkpoint = std::string(v); },
        [](const RunConfig& c) { return c.checkpoint.string(); }}},
      {"model.adapter",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.adapter_checkpoint = std::string(v); },
        [](const RunConfig& c) { return c.adapter_checkpoint.string(); }}},
      {"eval.split",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          if (v != "train" && v != "val" && v != "test") bad_value(k, v, "train, val or test");
          c.eval_split = std::string(v);
        },
        [](const RunConfig& c) { return c.eval_split; }}},
      {"out",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(v); },
        [](const RunConfig& c) { return c.out_dir.string(); }}},
  };
  return kFields;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  field(key).set(*this, key, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : fields()) k.push_back(name);
    return k;
  }();
  return kKeys;
}

void RunConfig::validate() const {
  if (data_source == "tsv" && data_path.empty()) {
    throw ConfigError("data.source = tsv needs data.path");
  }
  if (data_source == "synthetic" && (data_n < 2 || data_n % 2 != 0)) {
    throw ConfigError("data.n must be even and at least 2");
  }
  if (!(val_fraction > 0.0) || !(test_fraction >= 0.0) || val_fraction + test_fraction >= 1.0) {
    throw ConfigError("need 0 < data.val_fraction and data.val_fraction + data.test_fraction < 1");
  }
  if (pretrain_n < 2 || pretrain_n % 2 != 0) throw ConfigError("pretrain.n must be even and >= 2");
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain.lr must be positive");
  try {
    encoder_config().validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (rank == 0) throw ConfigError("adapter.rank must be at least 1");
  if (targets.empty()) throw ConfigError("adapter.targets must name at least one layer");
  if (!(base_lr > 0.0)) throw ConfigError("optim.base_lr must be positive");
  policy.validate();
  fusion.validate();
  if (!(density_threshold > -1.0 && density_threshold < 1.0)) {
    throw ConfigError("score.density_threshold must lie in (-1, 1)");
  }
  if (epochs == 0 || batch_size == 0) throw ConfigError("train.epochs and train.batch_size must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

std::filesystem::path RunConfig::base_checkpoint_path() const {
  return checkpoint.empty() ? out_dir / "base.ckpt" : checkpoint;
}

std::filesystem::path RunConfig::adapter_checkpoint_path() const {
  return adapter_checkpoint.empty() ? out_dir / "adapter.ckpt" : adapter_checkpoint;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig c = encoder;
  c.seed = seed;
  return c;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  config.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace lorafit
