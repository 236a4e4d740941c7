// lorafit: pre-train, fine-tune, evaluate and ablate low-rank adapters on a
// sentence-pair classifier.
//
// Exit codes: 0 success, 1 validation/configuration error, 2 I/O error,
// 3 training divergence.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lorafit/config.hpp"
#include "lorafit/error.hpp"
#include "lorafit/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file of 'key = value' lines");
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", args.out, "Output directory (overrides the config)");
  cmd->add_option("--set", args.overrides, "Per-key override key=value (repeatable)");
}

lorafit::RunConfig resolve(const CommonArgs& args) {
  lorafit::RunConfig config =
      args.config_path.empty() ? lorafit::RunConfig{} : lorafit::load_config(args.config_path);
  for (const auto& o : args.overrides) lorafit::apply_override(config, o);
  if (args.seed) config.seed = *args.seed;
  if (!args.out.empty()) config.out_dir = args.out;
  config.validate();
  return config;
}

void print_metrics(const std::string& label, const lorafit::MetricsReport& m) {
  std::cout << label << "  acc=" << lorafit::format_number(m.acc)
            << "  f1=" << lorafit::format_number(m.f1) << "  mcc=" << lorafit::format_number(m.mcc)
            << "\n";
}

int run(const std::string& command, const CommonArgs& args) {
  const lorafit::RunConfig config = resolve(args);
  if (command == "pretrain") {
    const auto r = lorafit::run_pretrain(config);
    std::cout << "pretrained base written to " << (config.out_dir / "base.ckpt").string()
              << "  slice_acc=" << lorafit::format_number(r.slice_acc) << "\n";
  } else if (command == "finetune") {
    const auto r = lorafit::run_finetune(config);
    std::cout << "trainable " << r.params.trainable_params << " of " << r.params.total_params
              << " parameters\n";
    if (!r.history.empty()) print_metrics("final val", r.history.back().val);
  } else if (command == "evaluate") {
    const auto r = lorafit::run_evaluate(config);
    print_metrics(config.eval_split, r.metrics);
  } else if (command == "ablate") {
    const auto suite = lorafit::run_ablation_suite(config);
    for (const auto& row : suite.rows) print_metrics(row.config_name, row.metrics);
  } else if (command == "gen-data") {
    const auto data = lorafit::run_gen_data(config);
    std::cout << "wrote " << data.size() << " pairs to " << (config.out_dir / "data.tsv").string()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank adapter fine-tuning experiments for sentence-pair matching"};
  app.require_subcommand(1);

  CommonArgs args;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", "Simulate pre-training, freeze and write base.ckpt"},
      {"finetune", "Inject adapters and fine-tune on top of a base checkpoint"},
      {"evaluate", "Score a split and write report.csv / per_example.csv"},
      {"ablate", "Run the four ablation configurations and write ablation.csv"},
      {"gen-data", "Write the synthetic corpus as data.tsv"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, args);
  } catch (const lorafit::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lorafit::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const lorafit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
