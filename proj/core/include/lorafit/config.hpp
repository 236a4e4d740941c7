#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lorafit/encoder.hpp"
#include "lorafit/optimizer.hpp"
#include "lorafit/scoring.hpp"

namespace lorafit {

/// Everything one experiment needs. Every field has a default; the text form
/// is line-oriented "key = value" with '#' comments, see keys() for the
/// accepted keys.
struct RunConfig {
  std::uint64_t seed = 42;

  std::string data_source = "synthetic";  // synthetic | tsv
  std::size_t data_n = 2000;
  std::filesystem::path data_path;
  double val_fraction = 0.2;
  double test_fraction = 0.2;

  std::size_t pretrain_n = 1200;
  std::size_t pretrain_epochs = 4;
  double pretrain_lr = 0.003;

  EncoderConfig encoder;

  std::size_t rank = 4;
  double adapter_scale = 1.0;
  std::vector<std::string> targets{"query", "value", "classifier"};

  AdaptationPolicy policy;
  double base_lr = 0.05;

  ScoreFusionWeights fusion;
  double density_threshold = 0.5;
  /// Unset means: calibrate on the validation split.
  std::optional<double> decision_threshold;

  AblationConfig ablation;
  std::size_t epochs = 6;
  std::size_t batch_size = 16;

  /// Empty means <out_dir>/base.ckpt and <out_dir>/adapter.ckpt.
  std::filesystem::path checkpoint;
  std::filesystem::path adapter_checkpoint;
  std::string eval_split = "val";  // train | val | test

  std::filesystem::path out_dir = "runs";

  /// Assigns one key from its text form. Throws ConfigError for unknown keys
  /// or unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Cross-field checks (fractions, sizes, rates). Throws ConfigError.
  void validate() const;

  /// All keys in keys() order, one "key = value" line each.
  std::string to_text() const;

  std::filesystem::path base_checkpoint_path() const;
  std::filesystem::path adapter_checkpoint_path() const;
  EncoderConfig encoder_config() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Applies a "key=value" override.
void apply_override(RunConfig& config, std::string_view assignment);

}  // namespace lorafit
