#pragma once

// Command implementations behind the CLI front end, callable in-process by
// tests. Exit codes are part of the interface:
//   0 success, 1 runtime failure, 2 config error, 3 artifact error
//   (bad checkpoint / vocabulary mismatch), 4 schema-version mismatch.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "selftrain/checkpoint.hpp"
#include "selftrain/config.hpp"
#include "selftrain/emloop.hpp"
#include "selftrain/eval.hpp"

namespace selftrain::cli {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitSchema = 4;

namespace fs = std::filesystem;
using json = nlohmann::json;

inline int cmd_run(const std::string& config_path, const std::string& out_dir,
                   std::optional<uint64_t> seed_override, int threads) {
  config::ExperimentConfig cfg;
  try {
    cfg = config::parse_file(config_path);
    if (seed_override.has_value()) cfg.master_seed = *seed_override;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const LoadError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  try {
    emloop::RunIO io{out_dir, threads};
    auto result = emloop::run_experiment(cfg, io);
    std::fprintf(stderr, "run complete: %zu iteration records -> %s\n",
                 result.records.size(), out_dir.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: run failed (mode %s): %s\n",
                 config::mode_name(cfg.mode).c_str(), e.what());
    return kExitRuntime;
  }
}

struct EvalCmd {
  std::string checkpoint_path;
  std::string problems_dir;  // directory holding problems.jsonl + problems.meta.json
  std::string split = "test";
  std::string out_path = "eval_report.json";
  std::string csv_path;          // default: derived from out_path
  bool greedy = true;
  std::vector<int> pass_ks;      // empty = no pass@k
  int pass_n = 64;
  bool majority = false;
  int majority_n = 64;
  double temperature = 1.0;
  double top_p = 1.0;  // reserved; only 1.0 (full support) is implemented
  int32_t max_len = 16;
  uint64_t seed = 0;
};

inline int cmd_eval(const EvalCmd& cmd) {
  if (cmd.top_p != 1.0) {
    std::fprintf(stderr, "error: --top-p is reserved; nucleus sampling is not implemented\n");
    return kExitConfig;
  }
  for (int k : cmd.pass_ks) {
    if (k < 1 || k > cmd.pass_n) {
      std::fprintf(stderr, "error: --pass-at-k values must be in [1, --n]\n");
      return kExitConfig;
    }
  }

  AnyPolicy policy;
  std::string checkpoint_id;
  tasks::ProblemSet set;
  try {
    const std::string bytes = io::read_file(cmd.checkpoint_path);
    policy = ckpt::deserialize(bytes);
    checkpoint_id = hex64(fnv1a64(bytes));
    set = tasks::load_problem_set(cmd.problems_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitArtifact;
  }
  if (policy.vocab().hash() != set.vocab.hash()) {
    std::fprintf(stderr, "error: checkpoint vocabulary does not match the problem set\n");
    return kExitArtifact;
  }

  try {
    eval::EvalOptions options;
    options.greedy = cmd.greedy;
    options.pass_ks = cmd.pass_ks;
    options.pass_n = cmd.pass_n;
    options.majority = cmd.majority;
    options.majority_n = cmd.majority_n;
    options.decode.temperature = cmd.temperature;
    options.decode.top_k = 0;
    options.decode.max_len = cmd.max_len;
    options.greedy_max_len = cmd.max_len;

    auto problems = set.split_problems(cmd.split);
    auto report = eval::build_eval_report(policy, checkpoint_id, problems, cmd.split,
                                          options, cmd.seed);
    io::atomic_write(cmd.out_path, report.to_json().dump(2) + "\n");
    if (report.pass_at_k.has_value()) {
      fs::path csv = cmd.csv_path.empty()
                         ? fs::path(cmd.out_path).replace_extension(".pass_at_k.csv")
                         : fs::path(cmd.csv_path);
      io::atomic_write(csv, report.curve_csv());
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: evaluation failed: %s\n", e.what());
    return kExitRuntime;
  }
}

// Merge iteration records across experiment directories into one tidy CSV:
// a row per run x iteration x metric, plus mode and seed columns so runs
// stay distinguishable.
inline int cmd_report(const std::vector<std::string>& dirs, const std::string& out_csv) {
  if (dirs.empty()) {
    std::fprintf(stderr, "error: no experiment directories given\n");
    return kExitConfig;
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& dir : dirs) {
    json cfg, manifest;
    std::vector<json> records;
    try {
      cfg = json::parse(io::read_file(fs::path(dir) / "config.json"));
      manifest = json::parse(io::read_file(fs::path(dir) / "manifest.json"));
      records = io::read_jsonl(fs::path(dir) / "iterations.jsonl");
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: cannot read %s: %s\n", dir.c_str(), e.what());
      return kExitArtifact;
    }
    if (cfg.value("schema_version", -1) != 1 || manifest.value("schema_version", -1) != 1) {
      std::fprintf(stderr, "error: %s: unsupported schema version\n", dir.c_str());
      return kExitSchema;
    }
    const std::string run_id = manifest.at("experiment_id").get<std::string>();
    const std::string mode = cfg.at("mode").get<std::string>();
    const std::string seed = std::to_string(cfg.at("master_seed").get<uint64_t>());
    for (const auto& rec : records) {
      const std::string iter = std::to_string(rec.at("iteration").get<int>());
      auto push = [&](const char* metric, const json& v) {
        if (v.is_null()) return;
        rows.push_back({run_id, mode, seed, iter, metric,
                        io::format_double(v.get<double>())});
      };
      push("train_reward", rec.at("train_reward"));
      push("val_reward", rec.at("val_reward"));
      push("test_reward", rec.at("test_reward"));
      push("dataset_size", rec.at("dataset_size"));
      push("problems_with_zero_survivors", rec.at("problems_with_zero_survivors"));
      push("elbo", rec.at("elbo"));
    }
  }
  try {
    io::atomic_write(out_csv, io::to_csv({"run", "mode", "master_seed", "iteration",
                                          "metric", "value"},
                                         rows));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace selftrain::cli
