// selftrain: run self-training experiments from JSON configs, evaluate
// checkpoints, and merge iteration records into plot-ready CSV.

#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selftrain/cli.hpp"

namespace {

int env_threads() {
  const char* v = std::getenv("SELFTRAIN_THREADS");
  if (!v) return 1;
  int n = std::atoi(v);
  return n < 1 ? 1 : n;
}

std::string env_out_dir() {
  const char* v = std::getenv("SELFTRAIN_OUT_DIR");
  return v ? v : "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale self-training laboratory for sequence policies"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run = app.add_subcommand("run", "execute an experiment config");
  std::string config_path, out_dir = env_out_dir();
  std::optional<uint64_t> seed_override;
  uint64_t seed_value = 0;
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  auto* out_opt = run->add_option("--out", out_dir, "output directory");
  if (out_dir.empty()) out_opt->required();
  auto* seed_opt = run->add_option("--seed", seed_value, "override master_seed");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a problem set");
  selftrain::cli::EvalCmd cmd;
  std::string pass_ks_arg;
  ev->add_option("--checkpoint", cmd.checkpoint_path, "checkpoint file")->required();
  ev->add_option("--problems", cmd.problems_dir,
                 "directory with problems.jsonl + problems.meta.json")->required();
  ev->add_option("--split", cmd.split, "problem split to evaluate (default test)");
  ev->add_option("--out", cmd.out_path, "report JSON path");
  ev->add_option("--csv", cmd.csv_path, "pass@k curve CSV path");
  bool no_greedy = false;
  ev->add_flag("--no-greedy", no_greedy, "skip greedy accuracy");
  ev->add_option("--pass-at-k", pass_ks_arg, "comma-separated k values, e.g. 1,4,16");
  ev->add_option("--n", cmd.pass_n, "samples per problem for pass@k (default 64)");
  ev->add_flag("--majority", cmd.majority, "majority-vote accuracy");
  ev->add_option("--majority-n", cmd.majority_n, "samples per vote (default 64)");
  ev->add_option("--temperature", cmd.temperature, "sampling temperature (default 1.0)");
  ev->add_option("--top-p", cmd.top_p, "reserved; only 1.0 (full support) supported");
  ev->add_option("--max-len", cmd.max_len, "decode length budget (default 16)");
  ev->add_option("--seed", cmd.seed, "evaluation seed");

  // ---- report ----
  auto* rep = app.add_subcommand("report", "merge experiment dirs into tidy CSV");
  std::vector<std::string> dirs;
  std::string report_out = "report.csv";
  rep->add_option("dirs", dirs, "experiment directories");
  rep->add_option("--out", report_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : selftrain::cli::kExitConfig;
  }

  if (run->parsed()) {
    if (seed_opt->count() > 0) seed_override = seed_value;
    return selftrain::cli::cmd_run(config_path, out_dir, seed_override, env_threads());
  }
  if (ev->parsed()) {
    cmd.greedy = !no_greedy;
    if (!pass_ks_arg.empty()) {
      std::string item;
      std::istringstream ss(pass_ks_arg);
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) cmd.pass_ks.push_back(std::atoi(item.c_str()));
      }
    }
    return selftrain::cli::cmd_eval(cmd);
  }
  if (rep->parsed()) {
    return selftrain::cli::cmd_report(dirs, report_out);
  }
  return selftrain::cli::kExitConfig;
}
