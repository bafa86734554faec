// Experiment runner.
//
//   fedsoup_cli run        --config exp.json [--seed N] [--trace trace.jsonl]
//   fedsoup_cli tradeoff   --config exp.json [--seed N]
//   fedsoup_cli loo        --config exp.json [--seed N]
//   fedsoup_cli sharpness  --config exp.json [--seed N] [--fine-tune ITERS]
//   fedsoup_cli export-data --config exp.json [--seed N] [--holdout H] [--out F]
//
// Exit codes: 0 success, 1 usage or config error, 2 numeric/runtime error.

#include <CLI11.hpp>

#include <iostream>

#include "fedsoup/error.hpp"
#include "fedsoup/experiment.hpp"

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> trace;
  int fine_tune = 0;
  std::optional<int> holdout;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Args& args) {
  cmd->add_option("--config", args.config, "Experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", args.seed, "Override training.seed");
  cmd->add_option("--trace", args.trace,
                  "Write per-round records as JSON lines");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated model-soup simulator"};
  app.require_subcommand(1);
  Args args;

  auto* run = app.add_subcommand("run", "Train every method, write table1.csv");
  auto* tradeoff =
      app.add_subcommand("tradeoff", "Fine-tuning sweep, write tradeoff.csv");
  auto* loo = app.add_subcommand("loo", "Leave-one-client-out, write loo.csv");
  auto* sharpness = app.add_subcommand(
      "sharpness", "Dominant Hessian eigenvalues, write sharpness.csv");
  auto* export_data =
      app.add_subcommand("export-data", "Dump the generated federation");
  for (auto* cmd : {run, tradeoff, loo, sharpness, export_data}) {
    add_common(cmd, args);
  }
  sharpness->add_option("--fine-tune", args.fine_tune,
                        "Fine-tune each deployed model this many epochs "
                        "before measuring");
  export_data->add_option("--holdout", args.holdout,
                          "Client to hold out as the unseen domain");
  export_data->add_option("--out", args.out, "Output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    fedsoup::CommandOptions opts;
    opts.seed = args.seed;
    opts.trace = args.trace;
    const auto spec = fedsoup::apply_overrides(
        fedsoup::parse_config_file(args.config), opts);
    if (*run) {
      fedsoup::cmd_run(spec);
    } else if (*tradeoff) {
      fedsoup::cmd_tradeoff(spec);
    } else if (*loo) {
      fedsoup::cmd_loo(spec);
    } else if (*sharpness) {
      fedsoup::cmd_sharpness(spec, args.fine_tune);
    } else if (*export_data) {
      fedsoup::cmd_export_data(spec, args.holdout, args.out);
    }
  } catch (const fedsoup::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
