#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lorafit/adapter.hpp"
#include "lorafit/checkpoint.hpp"
#include "lorafit/config.hpp"
#include "lorafit/data.hpp"
#include "lorafit/encoder.hpp"
#include "lorafit/injection.hpp"
#include "lorafit/metrics.hpp"
#include "lorafit/optimizer.hpp"

namespace lorafit {

/// A pair already mapped to token ids.
struct EncodedPair {
  std::uint64_t id = 0;
  std::vector<int> tokens_a;
  std::vector<int> tokens_b;
  int label = 0;
};

std::vector<EncodedPair> encode_pairs(const std::vector<PairExample>& examples,
                                      const Tokenizer& tokenizer);

struct DataSplits {
  std::vector<PairExample> train;
  std::vector<PairExample> val;
  std::vector<PairExample> test;

  /// "train", "val" or "test"; ValidationError otherwise.
  const std::vector<PairExample>& by_name(const std::string& name) const;
};

/// Loads (or generates) the fine-tuning corpus, shuffles it on the "split"
/// stream and cuts train / val / test by the configured fractions.
DataSplits load_splits(const RunConfig& config);

/// Corpus used for simulated pre-training: synthetic pairs drawn on the
/// "pretrain" stream, with ids offset past the fine-tuning corpus.
std::vector<PairExample> pretrain_corpus(const RunConfig& config);

// ---------------------------------------------------------------------------
// Scoring and evaluation

struct ScoredExample {
  std::uint64_t id = 0;
  double s_cls = 0.0;
  double target_density = 0.0;
  double area_weight = 0.0;
  double location_score = 0.0;
  double s_match = 0.0;
  int pred = 0;
  int label = 0;
};

/// Forward pass plus density features for each pair. With
/// `density_scoring` off the match score is S_cls itself. `pred` is left at 0.
std::vector<ScoredExample> score_pairs(const PairEncoder& model, const AdapterSet* adapters,
                                       const std::vector<EncodedPair>& pairs,
                                       const RunConfig& config, bool density_scoring);

struct EvaluationResult {
  MetricsReport metrics;
  ConfusionMatrix confusion;
  double threshold = 0.0;
  std::vector<ScoredExample> rows;
};

/// Scores `target`, deciding with the configured threshold or, if unset, the
/// one calibrated on `calibration`.
EvaluationResult evaluate_model(const PairEncoder& model, const AdapterSet* adapters,
                                const std::vector<EncodedPair>& calibration,
                                const std::vector<EncodedPair>& target, const RunConfig& config,
                                bool density_scoring);

/// Metrics of a prediction vector against its labels.
MetricsReport report_from_predictions(const std::vector<int>& preds, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Pipeline stages

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  MetricsReport val;
  double mean_alpha = 0.0;
  double mean_beta = 0.0;
};

struct PretrainResult {
  PairEncoder model;
  std::vector<EpochRecord> history;
  /// Argmax accuracy of the frozen model on the pre-training corpus.
  double slice_acc = 0.0;
};

/// Trains every encoder parameter on the pre-training corpus with Adam, then
/// freezes the whole model.
PretrainResult pretrain_and_freeze(const RunConfig& config);

/// Fine-tuned state: adapters for the low-rank structure, or the updated
/// target weights for the dense structure.
struct FinetuneResult {
  TrainingMode mode;
  AdapterSet adapters;
  std::map<std::string, Tensor> dense_weights;
  std::vector<EpochRecord> history;
  ParamReport params;
  std::size_t adapt_calls = 0;
  std::optional<AdapterLearningRates> grid_choice;
};

FinetuneResult finetune(const RunConfig& config, const PairEncoder& base,
                        const DataSplits& splits);

/// Model (base plus fine-tuned state) loaded from the two checkpoints.
struct LoadedModel {
  PairEncoder model;
  AdapterSet adapters;
  bool density_scoring = true;
};

LoadedModel load_finetuned(const RunConfig& config, const std::filesystem::path& base_path,
                           const std::filesystem::path& adapter_path);

Checkpoint finetune_checkpoint(const FinetuneResult& result);

EvaluationResult evaluate(const RunConfig& config, const std::filesystem::path& base_path,
                          const std::filesystem::path& adapter_path, const std::string& split);

// ---------------------------------------------------------------------------
// Subcommands. Each writes its outputs under config.out_dir together with the
// resolved config (config.txt).

struct AblationRow {
  std::string config_name;
  AblationConfig flags;
  MetricsReport metrics;
  std::filesystem::path run_dir;
};

struct AblationSuite {
  std::vector<AblationRow> rows;
  std::string base_fingerprint;
};

/// base.ckpt, pretrain_history.csv
PretrainResult run_pretrain(const RunConfig& config);
/// adapter.ckpt, history.csv, params.csv
FinetuneResult run_finetune(const RunConfig& config);
/// report.csv, per_example.csv
EvaluationResult run_evaluate(const RunConfig& config);
/// ablation.csv, ablation_meta.csv and one run directory per row
AblationSuite run_ablation_suite(const RunConfig& config);
/// data.tsv
std::vector<PairExample> run_gen_data(const RunConfig& config);

/// Directory name used for an ablation row ("ours", "lora", ...).
std::string ablation_slug(const AblationConfig& flags);

/// printf("%.6g").
std::string format_number(double v);

}  // namespace lorafit
