#include "lorafit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "lorafit/checkpoint.hpp"
#include "lorafit/error.hpp"
#include "lorafit/ops.hpp"
#include "lorafit/random.hpp"
#include "lorafit/scoring.hpp"
#include "lorafit/tensor_ops.hpp"

namespace lorafit {

namespace {

constexpr std::uint64_t kPretrainIdOffset = 1'000'000'000;

using Batch = std::vector<const EncodedPair*>;

std::vector<Batch> make_batches(const std::vector<EncodedPair>& data, std::size_t batch_size,
                                Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    Batch b;
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) b.push_back(&data[order[j]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

/// Forward + backward over one batch; `update` sees the session after the
/// backward sweep so it can read gradients. Returns the batch loss.
template <typename Update>
double run_batch(const PairEncoder& model, const AdapterSet* adapters, const Batch& batch,
                 Update&& update) {
  ad::Tape tape;
  ForwardSession session(tape, model, adapters);
  std::vector<ad::Var> logits;
  std::vector<int> labels;
  logits.reserve(batch.size());
  for (const EncodedPair* p : batch) {
    logits.push_back(session.encode(p->tokens_a, p->tokens_b).logits);
    labels.push_back(p->label);
  }
  ad::Var loss = ad::cross_entropy_loss(ad::concat_rows(logits), labels);
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw DivergenceError("training loss became non-finite");
  tape.backward(loss);
  update(session);
  return value;
}

/// Plain Adam, used only to simulate pre-training of the base encoder.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void step(PairEncoder& model, const std::map<std::string, ad::Var>& vars) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (const auto& [name, var] : vars) {
      const Tensor& g = var.grad();
      auto [it, fresh] = state_.try_emplace(name, Tensor(g.shape()), Tensor(g.shape()));
      Tensor& m = it->second.first;
      Tensor& v = it->second.second;
      Tensor& w = model.mutable_param(name);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> state_;
};

struct EpochStats {
  double loss = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

/// One fine-tuning epoch under `rates`, a callable (grad_a, grad_b) → rates.
template <typename Rates>
EpochStats finetune_epoch(PairEncoder& model, AdapterSet& adapters,
                          const std::vector<EncodedPair>& train, std::size_t batch_size, Rng& rng,
                          Rates&& rates) {
  EpochStats stats;
  std::size_t rate_queries = 0;
  double loss_sum = 0.0;
  const auto batches = make_batches(train, batch_size, rng);
  for (const Batch& batch : batches) {
    loss_sum += run_batch(model, &adapters, batch, [&](const ForwardSession& session) {
      for (const auto& [name, bound] : session.adapter_vars()) {
        const AdapterLearningRates r = rates(bound.a.grad(), bound.b.grad());
        step_lora(adapters.at(name), bound.a.grad(), bound.b.grad(), r);
        stats.alpha += r.alpha;
        stats.beta += r.beta;
        ++rate_queries;
      }
      for (const auto& [name, var] : session.dense_vars()) {
        const AdapterLearningRates r = rates(var.grad(), var.grad());
        step_dense(model.mutable_param(name), var.grad(), r.alpha);
        stats.alpha += r.alpha;
        stats.beta += r.beta;
        ++rate_queries;
      }
    });
  }
  stats.loss = loss_sum / static_cast<double>(batches.size());
  if (rate_queries > 0) {
    stats.alpha /= static_cast<double>(rate_queries);
    stats.beta /= static_cast<double>(rate_queries);
  }
  return stats;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_acc,val_f1,val_mcc,alpha,beta\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "," +
           format_number(r.val.acc) + "," + format_number(r.val.f1) + "," +
           format_number(r.val.mcc) + "," + format_number(r.mean_alpha) + "," +
           format_number(r.mean_beta) + "\n";
  }
  return out;
}

template <typename F>
auto with_row_context(const std::string& row, F&& f) -> decltype(f()) {
  const std::string prefix = "ablation configuration '" + row + "' failed: ";
  try {
    return f();
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<EncodedPair> encode_pairs(const std::vector<PairExample>& examples,
                                      const Tokenizer& tokenizer) {
  std::vector<EncodedPair> out;
  out.reserve(examples.size());
  for (const PairExample& e : examples) {
    out.push_back(EncodedPair{e.id, tokenizer.encode(e.text_a), tokenizer.encode(e.text_b), e.label});
  }
  return out;
}

const std::vector<PairExample>& DataSplits::by_name(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + name + "'");
}

DataSplits load_splits(const RunConfig& config) {
  std::vector<PairExample> all = config.data_source == "tsv"
                                     ? load_tsv(config.data_path)
                                     : generate_synthetic(config.seed, config.data_n);
  Rng rng(derive_seed(config.seed, "split"));
  std::shuffle(all.begin(), all.end(), rng);
  const auto n = all.size();
  const auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(n)));
  if (n_val + n_test >= n) throw ValidationError("dataset too small for the configured splits");
  DataSplits s;
  s.val.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val),
                all.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), all.end());
  return s;
}

std::vector<PairExample> pretrain_corpus(const RunConfig& config) {
  auto corpus = generate_synthetic(derive_seed(config.seed, "pretrain"), config.pretrain_n);
  for (PairExample& e : corpus) e.id += kPretrainIdOffset;
  return corpus;
}

std::vector<ScoredExample> score_pairs(const PairEncoder& model, const AdapterSet* adapters,
                                       const std::vector<EncodedPair>& pairs,
                                       const RunConfig& config, bool density_scoring) {
  std::vector<ScoredExample> out;
  out.reserve(pairs.size());
  for (const EncodedPair& p : pairs) {
    const PairOutput fwd = forward_pair(model, p.tokens_a, p.tokens_b, adapters);
    ScoredExample s;
    s.id = p.id;
    s.label = p.label;
    s.s_cls = classification_score(fwd.logits);
    const DensityFeatures f = density_features(fwd.similarity, config.density_threshold);
    s.target_density = f.target_density;
    s.area_weight = f.area_weight;
    s.location_score = f.location_score;
    s.s_match = density_scoring ? fuse_match_score(s.s_cls, f, config.fusion) : s.s_cls;
    out.push_back(s);
  }
  return out;
}

EvaluationResult evaluate_model(const PairEncoder& model, const AdapterSet* adapters,
                                const std::vector<EncodedPair>& calibration,
                                const std::vector<EncodedPair>& target, const RunConfig& config,
                                bool density_scoring) {
  if (target.empty()) throw ValidationError("cannot evaluate an empty split");
  EvaluationResult result;
  result.rows = score_pairs(model, adapters, target, config, density_scoring);
  if (config.decision_threshold) {
    result.threshold = *config.decision_threshold;
  } else {
    const bool same = &calibration == &target;
    const std::vector<ScoredExample> calib_rows =
        same ? result.rows : score_pairs(model, adapters, calibration, config, density_scoring);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : calib_rows) {
      scores.push_back(r.s_match);
      labels.push_back(r.label);
    }
    result.threshold = calibrate_threshold(scores, labels);
  }
  std::vector<int> preds, labels;
  for (auto& r : result.rows) {
    r.pred = decide(r.s_match, result.threshold);
    preds.push_back(r.pred);
    labels.push_back(r.label);
  }
  result.confusion = confusion(preds, labels);
  result.metrics = metrics(result.confusion);
  return result;
}

MetricsReport report_from_predictions(const std::vector<int>& preds, const std::vector<int>& labels) {
  return metrics(confusion(preds, labels));
}

PretrainResult pretrain_and_freeze(const RunConfig& config) {
  config.validate();
  PretrainResult result{build_encoder(config.encoder_config()), {}, 0.0};
  PairEncoder& model = result.model;
  model.unfreeze_all();

  const Tokenizer tokenizer(config.encoder.vocab_size, config.encoder.max_seq_len);
  const auto corpus = encode_pairs(pretrain_corpus(config), tokenizer);
  Rng rng(derive_seed(config.seed, "pretrain-shuffle"));
  Adam adam(config.pretrain_lr);
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = make_batches(corpus, config.batch_size, rng);
    for (const Batch& batch : batches) {
      loss_sum += run_batch(model, nullptr, batch,
                            [&](const ForwardSession& s) { adam.step(model, s.dense_vars()); });
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    result.history.push_back(rec);
  }
  model.freeze_all();

  std::size_t correct = 0;
  for (const EncodedPair& p : corpus) {
    const Tensor logits = forward_pair(model, p.tokens_a, p.tokens_b).logits;
    const int pred = logits[1] > logits[0] ? 1 : 0;
    correct += pred == p.label ? 1 : 0;
  }
  result.slice_acc = static_cast<double>(correct) / static_cast<double>(corpus.size());
  return result;
}

FinetuneResult finetune(const RunConfig& config, const PairEncoder& base, const DataSplits& splits) {
  config.validate();
  PairEncoder model = base;
  const Tokenizer tokenizer(model.config().vocab_size, model.config().max_seq_len);
  const auto train = encode_pairs(splits.train, tokenizer);
  const auto val = encode_pairs(splits.val, tokenizer);
  if (train.empty() || val.empty()) throw ValidationError("fine-tuning needs non-empty train and val splits");

  const auto targets = resolve_targets(model, config.targets);
  FinetuneResult result;
  result.mode = apply_ablation(config.ablation, model, targets, config.base_lr);
  AdapterSet& adapters = result.adapters;
  if (result.mode.structure == TrainingMode::Structure::LowRank) {
    InjectionSpec spec{config.targets, config.rank, config.adapter_scale, derive_seed(config.seed, "adapter")};
    adapters = inject_adapters(model, spec);
  }

  RateController controller(result.mode, config.policy);
  if (result.mode.adaptive_rates && config.policy.kind == PolicyKind::GridSearched) {
    // Probe budget: one epoch per candidate, replaying the first training
    // epoch (same start, same batch order), scored on the validation split.
    const ValidationScorer scorer = [&](const AdapterLearningRates& candidate) {
      PairEncoder probe_model = model;
      AdapterSet probe_adapters = adapters;
      Rng probe_rng(derive_seed(config.seed, "shuffle"));
      finetune_epoch(probe_model, probe_adapters, train, config.batch_size, probe_rng,
                     [&](const Tensor&, const Tensor&) { return candidate; });
      return evaluate_model(probe_model, &probe_adapters, val, val, config,
                            result.mode.density_scoring)
          .metrics.acc;
    };
    controller.resolve_grid(scorer);
    result.grid_choice = controller.rates(Tensor::scalar(0.0), Tensor::scalar(0.0));
  }

  Rng rng(derive_seed(config.seed, "shuffle"));
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochStats stats =
        finetune_epoch(model, adapters, train, config.batch_size, rng,
                       [&](const Tensor& ga, const Tensor& gb) { return controller.rates(ga, gb); });
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.loss;
    rec.mean_alpha = stats.alpha;
    rec.mean_beta = stats.beta;
    rec.val = evaluate_model(model, &adapters, val, val, config, result.mode.density_scoring).metrics;
    result.history.push_back(rec);
  }

  for (const std::string& name : result.mode.dense_targets) {
    result.dense_weights.emplace(name, model.param(name));
  }
  result.params = trainable_param_report(model, adapters);
  result.adapt_calls = controller.adapt_calls();
  return result;
}

Checkpoint finetune_checkpoint(const FinetuneResult& result) {
  if (result.mode.structure == TrainingMode::Structure::LowRank) return adapter_checkpoint(result.adapters);
  Checkpoint ckpt;
  ckpt.meta["kind"] = "dense";
  ckpt.tensors = result.dense_weights;
  return ckpt;
}

LoadedModel load_finetuned(const RunConfig& config, const std::filesystem::path& base_path,
                           const std::filesystem::path& adapter_path) {
  LoadedModel loaded{encoder_from_checkpoint(read_checkpoint(base_path)), {},
                     config.ablation.density_scoring()};
  const Checkpoint ckpt = read_checkpoint(adapter_path);
  const std::string& kind = ckpt.meta_at("kind");
  if (kind == "adapters") {
    loaded.adapters = adapters_from_checkpoint(ckpt, loaded.model);
  } else if (kind == "dense") {
    for (const auto& [name, t] : ckpt.tensors) loaded.model.set_param(name, t);
  } else {
    throw ValidationError("checkpoint '" + adapter_path.string() + "' holds '" + kind +
                          "', expected fine-tuned weights");
  }
  return loaded;
}

EvaluationResult evaluate(const RunConfig& config, const std::filesystem::path& base_path,
                          const std::filesystem::path& adapter_path, const std::string& split) {
  config.validate();
  const LoadedModel loaded = load_finetuned(config, base_path, adapter_path);
  const DataSplits splits = load_splits(config);
  const Tokenizer tokenizer(loaded.model.config().vocab_size, loaded.model.config().max_seq_len);
  const auto calibration = encode_pairs(splits.val, tokenizer);
  const auto target = encode_pairs(splits.by_name(split), tokenizer);
  const bool same = split == "val";
  return evaluate_model(loaded.model, &loaded.adapters, calibration, same ? calibration : target,
                        config, loaded.density_scoring);
}

PretrainResult run_pretrain(const RunConfig& config) {
  ensure_dir(config.out_dir);
  PretrainResult result = pretrain_and_freeze(config);
  write_checkpoint(config.out_dir / "base.ckpt", encoder_checkpoint(result.model));
  std::string csv = "epoch,train_loss\n";
  for (const EpochRecord& r : result.history) {
    csv += std::to_string(r.epoch) + "," + format_number(r.train_loss) + "\n";
  }
  write_text(config.out_dir / "pretrain_history.csv", csv);
  write_text(config.out_dir / "config.txt", config.to_text());
  return result;
}

FinetuneResult run_finetune(const RunConfig& config) {
  config.validate();
  ensure_dir(config.out_dir);
  const PairEncoder base = encoder_from_checkpoint(read_checkpoint(config.base_checkpoint_path()));
  FinetuneResult result = finetune(config, base, load_splits(config));
  write_checkpoint(config.adapter_checkpoint_path(), finetune_checkpoint(result));
  write_text(config.out_dir / "history.csv", history_csv(result.history));
  write_text(config.out_dir / "params.csv",
             "total_params,trainable_params,ratio\n" + std::to_string(result.params.total_params) +
                 "," + std::to_string(result.params.trainable_params) + "," +
                 format_number(result.params.ratio) + "\n");
  write_text(config.out_dir / "config.txt", config.to_text());
  return result;
}

EvaluationResult run_evaluate(const RunConfig& config) {
  ensure_dir(config.out_dir);
  EvaluationResult result = evaluate(config, config.base_checkpoint_path(),
                                     config.adapter_checkpoint_path(), config.eval_split);
  write_text(config.out_dir / "report.csv",
             "split,n,threshold,acc,f1,mcc\n" + config.eval_split + "," +
                 std::to_string(result.rows.size()) + "," + format_number(result.threshold) + "," +
                 format_number(result.metrics.acc) + "," + format_number(result.metrics.f1) + "," +
                 format_number(result.metrics.mcc) + "\n");
  std::string csv = "id,s_cls,d_j,w_s,s_loc,s_match,pred,label\n";
  for (const ScoredExample& r : result.rows) {
    csv += std::to_string(r.id) + "," + format_number(r.s_cls) + "," +
           format_number(r.target_density) + "," + format_number(r.area_weight) + "," +
           format_number(r.location_score) + "," + format_number(r.s_match) + "," +
           std::to_string(r.pred) + "," + std::to_string(r.label) + "\n";
  }
  write_text(config.out_dir / "per_example.csv", csv);
  write_text(config.out_dir / "config.txt", config.to_text());
  return result;
}

std::string ablation_slug(const AblationConfig& flags) {
  std::string slug;
  for (char c : flags.row_name()) {
    slug.push_back(c == ' ' || c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return slug;
}

AblationSuite run_ablation_suite(const RunConfig& config) {
  config.validate();
  ensure_dir(config.out_dir);
  std::filesystem::path base_path = config.checkpoint;
  if (base_path.empty()) {
    run_pretrain(config);
    base_path = config.out_dir / "base.ckpt";
  }
  AblationSuite suite;
  suite.base_fingerprint = file_fingerprint(base_path);

  std::string csv = "configuration,acc,f1,mcc\n";
  std::string meta =
      "configuration,use_adaptive_rates,use_lowrank,density_scoring,policy,seed,base_checkpoint,"
      "trainable_params\n";
  for (const AblationConfig& flags : AblationConfig::all()) {
    const std::string name(flags.row_name());
    RunConfig sub = config;
    sub.ablation = flags;
    sub.out_dir = config.out_dir / ablation_slug(flags);
    sub.checkpoint = base_path;
    sub.adapter_checkpoint.clear();
    sub.eval_split = config.eval_split;

    AblationRow row{name, flags, {}, sub.out_dir};
    const FinetuneResult ft = with_row_context(name, [&] { return run_finetune(sub); });
    row.metrics = with_row_context(name, [&] { return run_evaluate(sub); }).metrics;
    suite.rows.push_back(row);

    csv += name + "," + format_number(row.metrics.acc) + "," + format_number(row.metrics.f1) + "," +
           format_number(row.metrics.mcc) + "\n";
    meta += name + "," + (flags.use_adaptive_rates ? "true" : "false") + "," +
            (flags.use_lowrank ? "true" : "false") + "," +
            (flags.density_scoring() ? "true" : "false") + "," +
            (flags.use_adaptive_rates ? std::string(to_string(config.policy.kind)) : "shared") + "," +
            std::to_string(config.seed) + "," + suite.base_fingerprint + "," +
            std::to_string(ft.params.trainable_params) + "\n";
  }
  write_text(config.out_dir / "ablation.csv", csv);
  write_text(config.out_dir / "ablation_meta.csv", meta);
  write_text(config.out_dir / "config.txt", config.to_text());
  return suite;
}

std::vector<PairExample> run_gen_data(const RunConfig& config) {
  ensure_dir(config.out_dir);
  auto data = generate_synthetic(config.seed, config.data_n);
  write_tsv(config.out_dir / "data.tsv", data);
  return data;
}

}  // namespace lorafit
