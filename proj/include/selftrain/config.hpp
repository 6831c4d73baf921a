#pragma once

// Experiment configuration: strict JSON with a schema_version field. Unknown
// keys are rejected (fail-closed) so ablation configs cannot silently carry
// typos; every error names the offending field as a JSON pointer.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selftrain/estep.hpp"
#include "selftrain/mstep.hpp"
#include "selftrain/tasks.hpp"

namespace selftrain::config {

using json = nlohmann::json;

enum class RunMode {
  Restem,
  SftBaseline,
  Raft,
  StarGreedy,
  Rwr,
  Distill,
  ExactEm,
  SingleIter3x,
  DatasetSize,
};

inline std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::Restem: return "restem";
    case RunMode::SftBaseline: return "sft-baseline";
    case RunMode::Raft: return "raft";
    case RunMode::StarGreedy: return "star-greedy";
    case RunMode::Rwr: return "rwr";
    case RunMode::Distill: return "distill";
    case RunMode::ExactEm: return "exact-em";
    case RunMode::SingleIter3x: return "single-iter-3x";
    case RunMode::DatasetSize: return "dataset-size";
  }
  throw InvalidArgument("unknown mode");
}

inline RunMode mode_from_name(const std::string& s) {
  for (RunMode m : {RunMode::Restem, RunMode::SftBaseline, RunMode::Raft,
                    RunMode::StarGreedy, RunMode::Rwr, RunMode::Distill,
                    RunMode::ExactEm, RunMode::SingleIter3x, RunMode::DatasetSize})
    if (mode_name(m) == s) return m;
  throw ConfigError("/mode", "unknown mode '" + s + "'");
}

struct PolicySpec {
  PolicyKind kind = PolicyKind::Neural;
  int window = 8;
  int embed_dim = 12;
  int hidden_dim = 48;
};

struct WarmstartSpec {
  int steps = 600;  // 0 disables the warm start
};

struct ExperimentConfig {
  int schema_version = 1;
  RunMode mode = RunMode::Restem;
  uint64_t master_seed = 1;
  int iterations = 3;
  tasks::TaskSpec task;
  PolicySpec policy;
  WarmstartSpec warmstart;
  estep::GenerationConfig gen;
  estep::FilterSpec filter;
  estep::MixSpec mix;
  mstep::TrainConfig train;
  // distill mode
  std::string teacher_checkpoint;
  bool distill_one_per_problem = false;
  // dataset-size mode
  std::vector<int> ablation_sizes;

  json to_json() const;
  void validate() const;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& path,
                           const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError(path + "/" + key, "unknown field");
}

template <typename T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "/" + key, "wrong type");
  }
}

template <typename T>
T require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + "/" + key, "required field missing");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "/" + key, "wrong type");
  }
}

}  // namespace detail

inline DecodeParams decode_from_json(const json& j, const std::string& path) {
  detail::reject_unknown(j, path, {"temperature", "top_k", "max_len", "mode"});
  DecodeParams d;
  d.temperature = detail::get_or<double>(j, path, "temperature", 0.7);
  d.top_k = detail::get_or<int32_t>(j, path, "top_k", 40);
  d.max_len = detail::get_or<int32_t>(j, path, "max_len", 16);
  const std::string mode = detail::get_or<std::string>(j, path, "mode", "temperature-sample");
  if (mode == "temperature-sample") {
    d.mode = DecodeParams::Mode::TemperatureSample;
  } else if (mode == "greedy") {
    d.mode = DecodeParams::Mode::Greedy;
  } else {
    throw ConfigError(path + "/mode", "must be 'temperature-sample' or 'greedy'");
  }
  return d;
}

inline ExperimentConfig from_json(const json& j) {
  ExperimentConfig cfg;
  detail::reject_unknown(j, "", {"schema_version", "mode", "master_seed", "iterations",
                                 "task", "policy", "warmstart", "generation", "filter",
                                 "mix", "train", "distill", "ablation"});
  cfg.schema_version = detail::require<int>(j, "", "schema_version");
  if (cfg.schema_version != 1) throw ConfigError("/schema_version", "unsupported version");
  cfg.mode = mode_from_name(detail::require<std::string>(j, "", "mode"));
  cfg.master_seed = detail::require<uint64_t>(j, "", "master_seed");
  cfg.iterations = detail::get_or<int>(j, "", "iterations", 3);

  {
    const json& t = j.contains("task") ? j.at("task") : json::object();
    const std::string p = "/task";
    detail::reject_unknown(t, p, {"kind", "train", "val", "test", "warmup", "len_min",
                                  "len_max", "operand_count", "operand_min", "operand_max",
                                  "mod_min", "mod_max", "tiny_vocab", "tiny_letters",
                                  "scalar_rewards"});
    cfg.task.kind = tasks::kind_from_name(detail::require<std::string>(t, p, "kind"));
    cfg.task.n_train = detail::get_or<int>(t, p, "train", 0);
    cfg.task.n_val = detail::get_or<int>(t, p, "val", 0);
    cfg.task.n_test = detail::get_or<int>(t, p, "test", 0);
    cfg.task.n_warmup = detail::get_or<int>(t, p, "warmup", 0);
    cfg.task.len_min = detail::get_or<int>(t, p, "len_min", 3);
    cfg.task.len_max = detail::get_or<int>(t, p, "len_max", 6);
    cfg.task.operand_count = detail::get_or<int>(t, p, "operand_count", 3);
    cfg.task.operand_min = detail::get_or<int>(t, p, "operand_min", 1);
    cfg.task.operand_max = detail::get_or<int>(t, p, "operand_max", 9);
    cfg.task.mod_min = detail::get_or<int>(t, p, "mod_min", 3);
    cfg.task.mod_max = detail::get_or<int>(t, p, "mod_max", 20);
    cfg.task.tiny = detail::get_or<bool>(t, p, "tiny_vocab", false);
    cfg.task.tiny_letters = detail::get_or<int>(t, p, "tiny_letters", 3);
    cfg.task.scalar_rewards = detail::get_or<bool>(t, p, "scalar_rewards", false);
  }

  {
    const json& t = j.contains("policy") ? j.at("policy") : json::object();
    const std::string p = "/policy";
    detail::reject_unknown(t, p, {"kind", "window", "embed_dim", "hidden_dim"});
    const std::string kind = detail::get_or<std::string>(t, p, "kind", "neural");
    if (kind == "neural") {
      cfg.policy.kind = PolicyKind::Neural;
    } else if (kind == "tabular") {
      cfg.policy.kind = PolicyKind::Tabular;
    } else {
      throw ConfigError(p + "/kind", "must be 'neural' or 'tabular'");
    }
    cfg.policy.window = detail::get_or<int>(t, p, "window", 8);
    cfg.policy.embed_dim = detail::get_or<int>(t, p, "embed_dim", 12);
    cfg.policy.hidden_dim = detail::get_or<int>(t, p, "hidden_dim", 48);
  }

  {
    const json& t = j.contains("warmstart") ? j.at("warmstart") : json::object();
    detail::reject_unknown(t, "/warmstart", {"steps"});
    cfg.warmstart.steps = detail::get_or<int>(t, "/warmstart", "steps", 600);
  }

  {
    const json& t = j.contains("generation") ? j.at("generation") : json::object();
    const std::string p = "/generation";
    detail::reject_unknown(t, p, {"samples_per_problem", "cap_per_problem", "dedupe", "decode"});
    cfg.gen.samples_per_problem = detail::get_or<int>(t, p, "samples_per_problem", 32);
    cfg.gen.cap_per_problem = detail::get_or<int>(t, p, "cap_per_problem", 10);
    cfg.gen.dedupe = detail::get_or<bool>(t, p, "dedupe", true);
    cfg.gen.decode = decode_from_json(t.contains("decode") ? t.at("decode") : json::object(),
                                      p + "/decode");
  }

  {
    const json& t = j.contains("filter") ? j.at("filter") : json::object();
    const std::string p = "/filter";
    detail::reject_unknown(t, p, {"mode", "tau", "percentile", "interp_gamma", "weighting"});
    const std::string mode = detail::get_or<std::string>(t, p, "mode", "binary-tau");
    if (mode == "binary-tau") {
      cfg.filter.mode = estep::FilterSpec::Mode::BinaryTau;
    } else if (mode == "global-threshold") {
      cfg.filter.mode = estep::FilterSpec::Mode::GlobalThreshold;
    } else if (mode == "percentile") {
      cfg.filter.mode = estep::FilterSpec::Mode::Percentile;
    } else if (mode == "interpolation") {
      cfg.filter.mode = estep::FilterSpec::Mode::Interpolation;
    } else if (mode == "raft-max") {
      cfg.filter.mode = estep::FilterSpec::Mode::RaftMax;
    } else {
      throw ConfigError(p + "/mode", "unknown filter mode '" + mode + "'");
    }
    cfg.filter.tau = detail::get_or<double>(t, p, "tau", 0.5);
    cfg.filter.percentile = detail::get_or<double>(t, p, "percentile", 90.0);
    cfg.filter.interp_gamma = detail::get_or<double>(t, p, "interp_gamma", 0.5);
    const std::string w = detail::get_or<std::string>(t, p, "weighting", "indicator");
    if (w == "indicator") {
      cfg.filter.weighting = estep::FilterSpec::Weighting::Indicator;
    } else if (w == "identity") {
      cfg.filter.weighting = estep::FilterSpec::Weighting::Identity;
    } else if (w == "exp") {
      cfg.filter.weighting = estep::FilterSpec::Weighting::Exp;
    } else {
      throw ConfigError(p + "/weighting", "unknown weighting '" + w + "'");
    }
  }

  {
    const json& t = j.contains("mix") ? j.at("mix") : json::object();
    detail::reject_unknown(t, "/mix", {"lambda"});
    cfg.mix.lambda = detail::get_or<double>(t, "/mix", "lambda", 1.0);
  }

  {
    const json& t = j.contains("train") ? j.at("train") : json::object();
    const std::string p = "/train";
    detail::reject_unknown(t, p, {"step_size", "momentum", "batch_size", "max_steps",
                                  "eval_every", "patience"});
    cfg.train.step_size = detail::get_or<double>(t, p, "step_size", 0.05);
    cfg.train.momentum = detail::get_or<double>(t, p, "momentum", 0.9);
    cfg.train.batch_size = detail::get_or<int>(t, p, "batch_size", 32);
    cfg.train.max_steps = detail::get_or<int>(t, p, "max_steps", 3000);
    cfg.train.eval_every = detail::get_or<int>(t, p, "eval_every", 100);
    cfg.train.patience = detail::get_or<int>(t, p, "patience", 5);
  }

  {
    const json& t = j.contains("distill") ? j.at("distill") : json::object();
    detail::reject_unknown(t, "/distill", {"teacher_checkpoint", "one_per_problem"});
    cfg.teacher_checkpoint = detail::get_or<std::string>(t, "/distill", "teacher_checkpoint", "");
    cfg.distill_one_per_problem = detail::get_or<bool>(t, "/distill", "one_per_problem", false);
  }

  {
    const json& t = j.contains("ablation") ? j.at("ablation") : json::object();
    detail::reject_unknown(t, "/ablation", {"sizes"});
    cfg.ablation_sizes = detail::get_or<std::vector<int>>(t, "/ablation", "sizes", {});
  }

  cfg.validate();
  return cfg;
}

inline void ExperimentConfig::validate() const {
  if (iterations < 1) throw ConfigError("/iterations", "must be >= 1");
  try {
    task.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/task", e.what());
  }
  if (policy.window < 1) throw ConfigError("/policy/window", "must be >= 1");
  if (policy.embed_dim < 1) throw ConfigError("/policy/embed_dim", "must be >= 1");
  if (policy.hidden_dim < 1) throw ConfigError("/policy/hidden_dim", "must be >= 1");
  if (warmstart.steps < 0) throw ConfigError("/warmstart/steps", "must be >= 0");
  try {
    gen.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/generation", e.what());
  }
  try {
    filter.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/filter", e.what());
  }
  try {
    mix.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/mix", e.what());
  }
  try {
    train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("/train", e.what());
  }
  if (train.max_steps < 1) throw ConfigError("/train/max_steps", "must be >= 1");
  if (mode == RunMode::Distill && teacher_checkpoint.empty())
    throw ConfigError("/distill/teacher_checkpoint", "required for distill mode");
  if (mode == RunMode::DatasetSize) {
    if (ablation_sizes.empty()) throw ConfigError("/ablation/sizes", "required for dataset-size mode");
    for (int s : ablation_sizes)
      if (s < 1 || s > task.n_train)
        throw ConfigError("/ablation/sizes", "each size must be in [1, task.train]");
  }
  if (mode == RunMode::ExactEm) {
    if (policy.kind != PolicyKind::Tabular)
      throw ConfigError("/policy/kind", "exact-em requires a tabular policy");
    if (!task.tiny) throw ConfigError("/task/tiny_vocab", "exact-em requires the tiny vocabulary");
    if (gen.decode.max_len > 5)
      throw ConfigError("/generation/decode/max_len", "exact-em requires max_len <= 5");
  }
  if (task.n_train < 1) throw ConfigError("/task/train", "must be >= 1");
}

inline json ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["mode"] = mode_name(mode);
  j["master_seed"] = master_seed;
  j["iterations"] = iterations;
  j["task"] = {{"kind", tasks::kind_name(task.kind)},
               {"train", task.n_train},
               {"val", task.n_val},
               {"test", task.n_test},
               {"warmup", task.n_warmup},
               {"len_min", task.len_min},
               {"len_max", task.len_max},
               {"operand_count", task.operand_count},
               {"operand_min", task.operand_min},
               {"operand_max", task.operand_max},
               {"mod_min", task.mod_min},
               {"mod_max", task.mod_max},
               {"tiny_vocab", task.tiny},
               {"tiny_letters", task.tiny_letters},
               {"scalar_rewards", task.scalar_rewards}};
  j["policy"] = {{"kind", policy.kind == PolicyKind::Neural ? "neural" : "tabular"},
                 {"window", policy.window},
                 {"embed_dim", policy.embed_dim},
                 {"hidden_dim", policy.hidden_dim}};
  j["warmstart"] = {{"steps", warmstart.steps}};
  const char* decode_mode =
      gen.decode.mode == DecodeParams::Mode::Greedy ? "greedy" : "temperature-sample";
  j["generation"] = {{"samples_per_problem", gen.samples_per_problem},
                     {"cap_per_problem", gen.cap_per_problem},
                     {"dedupe", gen.dedupe},
                     {"decode",
                      {{"temperature", gen.decode.temperature},
                       {"top_k", gen.decode.top_k},
                       {"max_len", gen.decode.max_len},
                       {"mode", decode_mode}}}};
  const char* filter_mode = "binary-tau";
  switch (filter.mode) {
    case estep::FilterSpec::Mode::BinaryTau: filter_mode = "binary-tau"; break;
    case estep::FilterSpec::Mode::GlobalThreshold: filter_mode = "global-threshold"; break;
    case estep::FilterSpec::Mode::Percentile: filter_mode = "percentile"; break;
    case estep::FilterSpec::Mode::Interpolation: filter_mode = "interpolation"; break;
    case estep::FilterSpec::Mode::RaftMax: filter_mode = "raft-max"; break;
  }
  const char* weighting = "indicator";
  switch (filter.weighting) {
    case estep::FilterSpec::Weighting::Indicator: weighting = "indicator"; break;
    case estep::FilterSpec::Weighting::Identity: weighting = "identity"; break;
    case estep::FilterSpec::Weighting::Exp: weighting = "exp"; break;
  }
  j["filter"] = {{"mode", filter_mode},
                 {"tau", filter.tau},
                 {"percentile", filter.percentile},
                 {"interp_gamma", filter.interp_gamma},
                 {"weighting", weighting}};
  j["mix"] = {{"lambda", mix.lambda}};
  j["train"] = {{"step_size", train.step_size},
                {"momentum", train.momentum},
                {"batch_size", train.batch_size},
                {"max_steps", train.max_steps},
                {"eval_every", train.eval_every},
                {"patience", train.patience}};
  j["distill"] = {{"teacher_checkpoint", teacher_checkpoint},
                  {"one_per_problem", distill_one_per_problem}};
  j["ablation"] = {{"sizes", ablation_sizes}};
  return j;
}

inline ExperimentConfig parse_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("/", "top level must be an object");
  return from_json(j);
}

}  // namespace selftrain::config
