#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "lorafit/checkpoint.hpp"
#include "lorafit/error.hpp"
#include "lorafit/harness.hpp"
#include "test_support.hpp"

namespace lorafit {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

class Harness : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = testing::small_config(testing::scratch_dir("harness"));
    base_ = pretrain_and_freeze(*config_).model;
    splits_ = load_splits(*config_);
  }
  static void TearDownTestSuite() {
    config_.reset();
    base_.reset();
    splits_.reset();
  }

  static RunConfig with_ablation(bool adaptive, bool lowrank) {
    RunConfig c = *config_;
    c.ablation = {adaptive, lowrank};
    return c;
  }

  static inline std::optional<RunConfig> config_;
  static inline std::optional<PairEncoder> base_;
  static inline std::optional<DataSplits> splits_;
};

TEST_F(Harness, SplitsPartitionTheCorpus) {
  EXPECT_EQ(splits_->val.size(), 32u);
  EXPECT_EQ(splits_->test.size(), 32u);
  EXPECT_EQ(splits_->train.size(), 96u);
  std::set<std::uint64_t> ids;
  for (const auto* s : {&splits_->train, &splits_->val, &splits_->test})
    for (const auto& e : *s) ids.insert(e.id);
  EXPECT_EQ(ids.size(), 160u);
  EXPECT_THROW(splits_->by_name("dev"), ValidationError);
}

TEST_F(Harness, PretrainCorpusIsDisjointFromFineTuningIds) {
  for (const auto& e : pretrain_corpus(*config_)) EXPECT_GE(e.id, 1'000'000'000u);
}

TEST_F(Harness, PretrainIsDeterministicAndFreezes) {
  const auto again = pretrain_and_freeze(*config_);
  EXPECT_EQ(serialize(encoder_checkpoint(again.model)), serialize(encoder_checkpoint(*base_)));
  EXPECT_TRUE(again.model.unfrozen().empty());
  EXPECT_GT(again.slice_acc, 0.5);
  ASSERT_EQ(again.history.size(), config_->pretrain_epochs);
  EXPECT_LT(again.history.back().train_loss, again.history.front().train_loss);
}

TEST_F(Harness, FinetuneNeverTouchesTheFrozenBase) {
  const auto result = finetune(*config_, *base_, *splits_);
  ASSERT_EQ(result.history.size(), config_->epochs);
  for (const auto& [name, a] : result.adapters) EXPECT_TRUE(bitwise_equal(a.base(), base_->param(name))) << name;
  bool moved = false;
  for (const auto& [name, a] : result.adapters) moved = moved || frobenius_norm(a.b()) > 0.0;
  EXPECT_TRUE(moved);
}

TEST_F(Harness, FinetuneIsDeterministic) {
  const auto x = finetune(*config_, *base_, *splits_);
  const auto y = finetune(*config_, *base_, *splits_);
  EXPECT_EQ(serialize(finetune_checkpoint(x)), serialize(finetune_checkpoint(y)));
  for (std::size_t i = 0; i < x.history.size(); ++i) EXPECT_EQ(x.history[i].train_loss, y.history[i].train_loss);
}

TEST_F(Harness, ZeroInitAdaptersReproduceFrozenLogits) {
  InjectionSpec spec{config_->targets, config_->rank, 1.0, 3};
  const auto adapters = inject_adapters(*base_, spec);
  const Tokenizer tok(config_->encoder.vocab_size, config_->encoder.max_seq_len);
  for (const auto& p : encode_pairs(splits_->val, tok)) {
    EXPECT_TRUE(bitwise_equal(forward_pair(*base_, p.tokens_a, p.tokens_b).logits,
                              forward_pair(*base_, p.tokens_a, p.tokens_b, &adapters).logits));
  }
}

TEST_F(Harness, ParamReportMatchesIndependentCount) {
  const auto result = finetune(*config_, *base_, *splits_);
  EXPECT_EQ(result.params.trainable_params, trainable_param_report(*base_, result.adapters).trainable_params);
  std::size_t factors = 0;
  for (const auto& [name, a] : result.adapters) factors += a.rank() * (a.input_dim() + a.output_dim());
  EXPECT_EQ(result.params.trainable_params, factors);
  EXPECT_EQ(result.params.total_params, base_->param_count() + factors);
}

TEST_F(Harness, PlainLoraTrainsOnlyAdapterFactors) {
  const auto result = finetune(with_ablation(false, false), *base_, *splits_);
  EXPECT_FALSE(result.adapters.empty());
  EXPECT_TRUE(result.dense_weights.empty());
  EXPECT_FALSE(result.mode.density_scoring);
  std::size_t factors = 0;
  for (const auto& [name, a] : result.adapters) factors += a.trainable_params();
  EXPECT_EQ(result.params.trainable_params, factors);
  EXPECT_EQ(result.adapt_calls, 0u);
  for (const auto& rec : result.history) {
    EXPECT_DOUBLE_EQ(rec.mean_alpha, config_->base_lr);
    EXPECT_DOUBLE_EQ(rec.mean_beta, config_->base_lr);
  }
}

TEST_F(Harness, DenseRowTrainsTargetLayersDirectly) {
  const auto result = finetune(with_ablation(true, false), *base_, *splits_);
  EXPECT_TRUE(result.adapters.empty());
  std::size_t dense = 0;
  for (const auto& name : resolve_targets(*base_, config_->targets)) dense += base_->param(name).numel();
  EXPECT_EQ(result.params.trainable_params, dense);
  ASSERT_EQ(result.dense_weights.size(), resolve_targets(*base_, config_->targets).size());
  for (const auto& [name, w] : result.dense_weights) EXPECT_FALSE(bitwise_equal(w, base_->param(name))) << name;
}

TEST_F(Harness, SharedRateRowNeverConsultsPolicy) {
  RunConfig c = with_ablation(false, true);
  c.policy.kind = PolicyKind::GradNormScaled;
  EXPECT_EQ(finetune(c, *base_, *splits_).adapt_calls, 0u);
}

TEST_F(Harness, GradNormRatesStayBelowBase) {
  RunConfig c = *config_;
  c.policy.kind = PolicyKind::GradNormScaled;
  const auto result = finetune(c, *base_, *splits_);
  EXPECT_GT(result.adapt_calls, 0u);
  for (const auto& rec : result.history) {
    EXPECT_LE(rec.mean_alpha, c.policy.base_alpha);
    EXPECT_LE(rec.mean_beta, c.policy.base_beta);
  }
}

TEST_F(Harness, GridChoiceIsTheBestProbedCandidate) {
  RunConfig c = *config_;
  c.epochs = 1;
  c.policy.kind = PolicyKind::GridSearched;
  c.policy.grid = {{0.001, 0.001}, {0.2, 0.5}};
  const auto result = finetune(c, *base_, *splits_);
  ASSERT_TRUE(result.grid_choice.has_value());
  EXPECT_EQ(result.adapt_calls, 1u);

  // Brute force: a one-epoch fixed-rate run per candidate replays the probe.
  std::size_t best = 0;
  double best_acc = -1.0;
  for (std::size_t i = 0; i < c.policy.grid.size(); ++i) {
    RunConfig probe = c;
    probe.policy = AdaptationPolicy{PolicyKind::Fixed, c.policy.grid[i].alpha, c.policy.grid[i].beta, {}};
    const double acc = finetune(probe, *base_, *splits_).history.front().val.acc;
    if (acc > best_acc) {
      best_acc = acc;
      best = i;
    }
  }
  EXPECT_EQ(result.grid_choice->alpha, c.policy.grid[best].alpha);
  EXPECT_EQ(result.grid_choice->beta, c.policy.grid[best].beta);
  EXPECT_EQ(result.history.front().val.acc, best_acc);
}

TEST_F(Harness, EvaluationDeterministicAndSelfConsistent) {
  const auto ft = finetune(*config_, *base_, *splits_);
  const Tokenizer tok(config_->encoder.vocab_size, config_->encoder.max_seq_len);
  const auto val = encode_pairs(splits_->val, tok);
  const auto a = evaluate_model(*base_, &ft.adapters, val, val, *config_, true);
  const auto b = evaluate_model(*base_, &ft.adapters, val, val, *config_, true);
  EXPECT_EQ(a.threshold, b.threshold);
  EXPECT_EQ(a.confusion, b.confusion);
  std::vector<int> preds, labels;
  for (const auto& r : a.rows) {
    EXPECT_EQ(r.s_match, fuse_match_score(r.s_cls, {r.area_weight, r.target_density, r.location_score},
                                          config_->fusion));
    EXPECT_EQ(r.pred, decide(r.s_match, a.threshold));
    preds.push_back(r.pred);
    labels.push_back(r.label);
  }
  const auto re = report_from_predictions(preds, labels);
  EXPECT_EQ(re.acc, a.metrics.acc);
  EXPECT_EQ(re.f1, a.metrics.f1);
  EXPECT_EQ(re.mcc, a.metrics.mcc);

  const auto s_cls_only = evaluate_model(*base_, &ft.adapters, val, val, *config_, false);
  for (const auto& r : s_cls_only.rows) EXPECT_EQ(r.s_match, r.s_cls);
  EXPECT_THROW(evaluate_model(*base_, &ft.adapters, val, {}, *config_, true), ValidationError);
}

TEST_F(Harness, FixedDecisionThresholdSkipsCalibration) {
  RunConfig c = *config_;
  c.decision_threshold = 0.4;
  const Tokenizer tok(c.encoder.vocab_size, c.encoder.max_seq_len);
  const auto val = encode_pairs(splits_->val, tok);
  EXPECT_EQ(evaluate_model(*base_, nullptr, val, val, c, true).threshold, 0.4);
}

TEST_F(Harness, OraclePredictorScoresPerfectly) {
  std::vector<int> labels;
  for (const auto& e : splits_->val) labels.push_back(e.label);
  const auto r = report_from_predictions(labels, labels);
  EXPECT_EQ(r.acc, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.mcc, 1.0);
}

TEST_F(Harness, PipelineFilesAndPerExampleRecomputation) {
  RunConfig c = *config_;
  c.out_dir = testing::scratch_dir("harness_pipeline");
  run_pretrain(c);
  run_finetune(c);
  const auto eval = run_evaluate(c);
  for (const char* f : {"base.ckpt", "adapter.ckpt", "history.csv", "params.csv", "report.csv",
                        "per_example.csv", "config.txt", "pretrain_history.csv"})
    EXPECT_TRUE(std::filesystem::exists(c.out_dir / f)) << f;

  const auto history = read_csv(c.out_dir / "history.csv");
  EXPECT_EQ(history.size(), c.epochs + 1);
  EXPECT_EQ(history[0][0], "epoch");

  const auto rows = read_csv(c.out_dir / "per_example.csv");
  ASSERT_EQ(rows.size(), splits_->val.size() + 1);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"id", "s_cls", "d_j", "w_s", "s_loc", "s_match", "pred", "label"}));
  std::vector<int> preds, labels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    preds.push_back(std::stoi(rows[i][6]));
    labels.push_back(std::stoi(rows[i][7]));
  }
  const auto re = report_from_predictions(preds, labels);
  EXPECT_EQ(re.acc, eval.metrics.acc);
  EXPECT_EQ(re.f1, eval.metrics.f1);
  EXPECT_EQ(re.mcc, eval.metrics.mcc);

  const auto report = read_csv(c.out_dir / "report.csv");
  ASSERT_EQ(report.size(), 2u);
  EXPECT_EQ(report[1][3], format_number(eval.metrics.acc));

  const auto params = read_csv(c.out_dir / "params.csv");
  EXPECT_EQ(params[0], (std::vector<std::string>{"total_params", "trainable_params", "ratio"}));

  const std::string history_bytes = slurp(c.out_dir / "history.csv");
  const std::string report_bytes = slurp(c.out_dir / "report.csv");
  run_finetune(c);
  run_evaluate(c);
  EXPECT_EQ(slurp(c.out_dir / "history.csv"), history_bytes);
  EXPECT_EQ(slurp(c.out_dir / "report.csv"), report_bytes);
}

TEST_F(Harness, MissingCheckpointIsIoError) {
  RunConfig c = *config_;
  c.out_dir = testing::scratch_dir("harness_missing");
  EXPECT_THROW(run_finetune(c), IoError);
}

TEST_F(Harness, AblationSuite) {
  RunConfig c = *config_;
  c.out_dir = testing::scratch_dir("harness_ablation");
  const auto suite = run_ablation_suite(c);
  ASSERT_EQ(suite.rows.size(), 4u);

  const auto csv = read_csv(c.out_dir / "ablation.csv");
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], (std::vector<std::string>{"configuration", "acc", "f1", "mcc"}));
  const std::vector<std::string> names{"Ours", "Remove adaptive learning rate",
                                       "Remove low-rank matrix updates", "LORA"};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(csv[i + 1][0], names[i]);

  const auto meta = read_csv(c.out_dir / "ablation_meta.csv");
  ASSERT_EQ(meta.size(), 5u);
  EXPECT_EQ(meta[1][1], "true");
  EXPECT_EQ(meta[1][2], "true");
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_EQ(meta[i][6], suite.base_fingerprint);
    EXPECT_EQ(meta[i][5], std::to_string(c.seed));
  }
  EXPECT_EQ(suite.base_fingerprint, file_fingerprint(c.out_dir / "base.ckpt"));

  for (const auto& row : suite.rows) {
    RunConfig sub = c;
    sub.ablation = row.flags;
    const auto re = evaluate(sub, c.out_dir / "base.ckpt", row.run_dir / "adapter.ckpt", "val");
    EXPECT_EQ(re.metrics.acc, row.metrics.acc) << row.config_name;
    EXPECT_EQ(re.metrics.f1, row.metrics.f1) << row.config_name;
    EXPECT_EQ(re.metrics.mcc, row.metrics.mcc) << row.config_name;
  }
}

TEST_F(Harness, AblationFailureNamesTheConfiguration) {
  RunConfig c = *config_;
  c.out_dir = testing::scratch_dir("harness_ablation_fail");
  PairEncoder poisoned = *base_;
  poisoned.unfreeze("classifier");
  poisoned.mutable_param("classifier")[0] = std::numeric_limits<double>::infinity();
  poisoned.freeze_all();
  c.checkpoint = c.out_dir / "poisoned.ckpt";
  write_checkpoint(c.checkpoint, encoder_checkpoint(poisoned));
  try {
    run_ablation_suite(c);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("Ours"), std::string::npos) << e.what();
  }
}

TEST(FormatNumber, SixSignificantDigits) {
  EXPECT_EQ(format_number(0.857142857), "0.857143");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(92.4876), "92.4876");
  EXPECT_EQ(format_number(1234567.0), "1.23457e+06");
}

TEST(AblationSlug, DirectoryNames) {
  EXPECT_EQ(ablation_slug({true, true}), "ours");
  EXPECT_EQ(ablation_slug({false, false}), "lora");
  EXPECT_EQ(ablation_slug({true, false}), "remove_low_rank_matrix_updates");
}

}  // namespace
}  // namespace lorafit
