#pragma once

// Orchestration of the self-training loop: iterate Generate (sample from the
// current policy, annotate rewards, filter/weight) and Improve (refit from
// the frozen base checkpoint), with per-iteration metrics. Also the exact-EM
// runner for enumerable instances, distillation from a teacher checkpoint,
// and the two ablation drivers.
//
// Two contracts matter everywhere:
//   - generation always samples from the CURRENT policy (or the teacher),
//   - training always restarts from the BASE checkpoint, never the previous
//     iterate; every iteration re-verifies the base hash.

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selftrain/checkpoint.hpp"
#include "selftrain/config.hpp"
#include "selftrain/elbo.hpp"
#include "selftrain/estep.hpp"
#include "selftrain/eval.hpp"
#include "selftrain/mstep.hpp"
#include "selftrain/policy.hpp"

namespace selftrain::emloop {

using config::ExperimentConfig;
using config::RunMode;
using json = nlohmann::json;

struct IterationRecord {
  int iteration = 0;
  double train_reward = 0.0;
  double val_reward = 0.0;
  double test_reward = 0.0;
  long long dataset_size = 0;
  int problems_with_zero_survivors = 0;
  bool skipped = false;
  std::optional<double> elbo;
  std::optional<double> elbo_slack_estep;
  std::optional<double> elbo_slack_mstep;
  std::string checkpoint;

  json to_json() const {
    json j = {{"iteration", iteration},
              {"train_reward", train_reward},
              {"val_reward", val_reward},
              {"test_reward", test_reward},
              {"dataset_size", dataset_size},
              {"problems_with_zero_survivors", problems_with_zero_survivors},
              {"skipped", skipped},
              {"checkpoint", checkpoint}};
    j["elbo"] = elbo.has_value() ? json(*elbo) : json(nullptr);
    j["elbo_slack_estep"] = elbo_slack_estep.has_value() ? json(*elbo_slack_estep) : json(nullptr);
    j["elbo_slack_mstep"] = elbo_slack_mstep.has_value() ? json(*elbo_slack_mstep) : json(nullptr);
    return j;
  }

  static IterationRecord from_json(const json& j) {
    IterationRecord r;
    r.iteration = j.at("iteration").get<int>();
    r.train_reward = j.at("train_reward").get<double>();
    r.val_reward = j.at("val_reward").get<double>();
    r.test_reward = j.at("test_reward").get<double>();
    r.dataset_size = j.at("dataset_size").get<long long>();
    r.problems_with_zero_survivors = j.at("problems_with_zero_survivors").get<int>();
    r.skipped = j.at("skipped").get<bool>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    if (!j.at("elbo").is_null()) r.elbo = j.at("elbo").get<double>();
    if (!j.at("elbo_slack_estep").is_null())
      r.elbo_slack_estep = j.at("elbo_slack_estep").get<double>();
    if (!j.at("elbo_slack_mstep").is_null())
      r.elbo_slack_mstep = j.at("elbo_slack_mstep").get<double>();
    return r;
  }
};

struct RunIO {
  std::filesystem::path dir;  // empty = keep everything in memory
  int threads = 1;

  bool enabled() const { return !dir.empty(); }
};

struct RunResult {
  std::vector<IterationRecord> records;
  AnyPolicy base;
  AnyPolicy final_policy;
  std::string base_id;
  tasks::ProblemSet problems;
  std::vector<std::string> train_ids;  // problems actually used for generation
  long long total_samples_generated = 0;
  std::vector<bool> base_hash_checks;
};

namespace detail {

struct SplitView {
  std::vector<tasks::Problem> train, val, test, warmup;
};

inline SplitView make_splits(const tasks::ProblemSet& set,
                             const std::vector<size_t>* train_subset) {
  SplitView v;
  auto train_idx = set.split_indices("train");
  if (train_subset) {
    std::vector<size_t> chosen;
    for (size_t k : *train_subset) chosen.push_back(train_idx[k]);
    std::sort(chosen.begin(), chosen.end());
    for (size_t i : chosen) v.train.push_back(set.problems[i]);
  } else {
    for (size_t i : train_idx) v.train.push_back(set.problems[i]);
  }
  for (size_t i : set.split_indices("val")) v.val.push_back(set.problems[i]);
  for (size_t i : set.split_indices("test")) v.test.push_back(set.problems[i]);
  for (size_t i : set.split_indices("warmup")) v.warmup.push_back(set.problems[i]);
  return v;
}

// The frozen starting checkpoint: a fresh policy, optionally warm-started by
// a short supervised pass on the disjoint warm-up split so a neural policy
// emits well-formed outputs before the first Generate step.
inline AnyPolicy make_base_policy(const ExperimentConfig& cfg, const tasks::ProblemSet& set,
                                  const SplitView& splits) {
  const Vocab& vocab = set.vocab;
  if (cfg.policy.kind == PolicyKind::Tabular)
    return AnyPolicy(TabularPolicy(vocab, cfg.policy.window));

  NeuralPolicy policy(vocab, cfg.policy.window, cfg.policy.embed_dim, cfg.policy.hidden_dim,
                      rng::derive_seed(cfg.master_seed, "init"));
  if (cfg.warmstart.steps > 0 && !splits.warmup.empty()) {
    std::vector<TrainExample> refs = set.reference_examples("warmup");
    mstep::TrainConfig warm = cfg.train;
    warm.max_steps = cfg.warmstart.steps;
    warm.eval_every = std::min(warm.eval_every, warm.max_steps);
    auto result = mstep::train_policy(policy, refs, splits.warmup, warm,
                                      cfg.gen.decode.max_len,
                                      rng::derive_seed(cfg.master_seed, "warmstart"));
    return AnyPolicy(std::move(result.policy));
  }
  return AnyPolicy(std::move(policy));
}

inline IterationRecord measure(const AnyPolicy& policy, const SplitView& splits,
                               int iteration, int32_t max_len, const std::string& ckpt_id) {
  IterationRecord rec;
  rec.iteration = iteration;
  rec.train_reward = eval::greedy_accuracy(policy, splits.train, max_len);
  rec.val_reward = eval::greedy_accuracy(policy, splits.val, max_len);
  rec.test_reward = eval::greedy_accuracy(policy, splits.test, max_len);
  rec.checkpoint = ckpt_id;
  return rec;
}

// Effective data-selection settings for a mode. raft selects the best sample
// per problem and weights by reward (so an unsolved problem's best-but-wrong
// sample carries zero weight); rwr keeps everything and weights by
// exp(reward); star-greedy swaps the sampler for greedy decoding.
struct ModePlan {
  bool skip_filter = false;
  std::optional<estep::FilterSpec::Mode> filter_override;
  std::optional<estep::FilterSpec::Weighting> weighting_override;
  bool greedy_decode = false;
};

inline ModePlan plan_for(RunMode mode) {
  ModePlan plan;
  switch (mode) {
    case RunMode::Raft:
      plan.filter_override = estep::FilterSpec::Mode::RaftMax;
      plan.weighting_override = estep::FilterSpec::Weighting::Identity;
      break;
    case RunMode::Rwr:
      plan.skip_filter = true;
      plan.weighting_override = estep::FilterSpec::Weighting::Exp;
      break;
    case RunMode::StarGreedy:
      plan.greedy_decode = true;
      break;
    default:
      break;
  }
  return plan;
}

inline std::string two_digit(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Self-training loop (restem / sft-baseline / raft / star-greedy / rwr /
// distill)
// ----------------------------------------------------------------------------

inline RunResult run_self_training(const ExperimentConfig& cfg, const RunIO& io,
                                   const tasks::ProblemSet* preset_problems = nullptr,
                                   const std::vector<size_t>* train_subset = nullptr) {
  cfg.validate();
  RunResult result;
  result.problems = preset_problems
                        ? *preset_problems
                        : tasks::gen_problem_set(cfg.task, rng::derive_seed(cfg.master_seed, "problems"));
  const tasks::ProblemSet& set = result.problems;
  auto splits = detail::make_splits(set, train_subset);
  const int32_t max_len = cfg.gen.decode.max_len;

  for (const auto& p : splits.train) result.train_ids.push_back(p.id);

  result.base = detail::make_base_policy(cfg, set, splits);
  const std::string base_serialized = ckpt::serialize(result.base);
  result.base_id = hex64(fnv1a64(base_serialized));

  std::optional<AnyPolicy> teacher;
  if (cfg.mode == RunMode::Distill) {
    teacher = ckpt::load(cfg.teacher_checkpoint);
    if (teacher->vocab().hash() != set.vocab.hash())
      throw InvalidArgument("distill: teacher vocabulary does not match the task");
  }

  if (io.enabled()) {
    std::filesystem::create_directories(io.dir / "checkpoints");
    std::filesystem::create_directories(io.dir / "datasets");
    std::filesystem::create_directories(io.dir / "curves");
    tasks::save_problem_set(set, io.dir);
    ckpt::save(result.base, io.dir / "checkpoints" / "base.ckpt");
  }

  result.records.push_back(detail::measure(result.base, splits, 0, max_len, result.base_id));

  AnyPolicy current = clone_base(result.base);
  const detail::ModePlan plan = detail::plan_for(cfg.mode);

  // problem id -> input, for building training examples from records
  std::map<std::string, const tasks::Problem*> by_id;
  for (const auto& p : set.problems) by_id[p.id] = &p;

  std::vector<TrainExample> train_references;
  for (const auto& p : splits.train) {
    const auto* ref = set.find_reference(p.id);
    train_references.push_back(TrainExample{p.input, ref->output, 1.0});
  }

  const int iterations = cfg.mode == RunMode::SftBaseline ? 1 : cfg.iterations;
  for (int iter = 1; iter <= iterations; ++iter) {
    // restart contract: every Improve starts from the frozen base checkpoint
    result.base_hash_checks.push_back(hex64(fnv1a64(ckpt::serialize(result.base))) ==
                                      result.base_id);

    std::vector<TrainExample> dataset;
    std::vector<estep::SampleRecord> kept;
    int zero_survivors = 0;
    long long dataset_size = 0;

    if (cfg.mode == RunMode::SftBaseline) {
      dataset = train_references;
      dataset_size = static_cast<long long>(dataset.size());
    } else {
      const AnyPolicy& source = teacher ? *teacher : current;
      const std::string source_id = ckpt::policy_id(source);
      estep::GenerationConfig gen = cfg.gen;
      if (plan.greedy_decode) gen.decode.mode = DecodeParams::Mode::Greedy;
      if (cfg.mode == RunMode::Distill && cfg.distill_one_per_problem) gen.cap_per_problem = 1;

      auto records = estep::generate_samples(source, splits.train, gen,
                                             rng::derive_seed(cfg.master_seed, "gen", iter),
                                             iter, source_id, cfg.task.scalar_rewards,
                                             io.threads);
      result.total_samples_generated += static_cast<long long>(records.size());

      std::vector<estep::SampleRecord> filtered;
      if (plan.skip_filter) {
        filtered.assign(records.begin(), records.end());
      } else {
        estep::FilterSpec spec = cfg.filter;
        if (plan.filter_override) spec.mode = *plan.filter_override;
        filtered = estep::apply_filter(records, spec);
      }
      kept = estep::dedupe_and_cap(filtered, gen, rng::derive_seed(cfg.master_seed, "cap", iter));

      auto weighting = plan.weighting_override ? *plan.weighting_override : cfg.filter.weighting;
      auto weighted = estep::attach_weights(kept, weighting);

      std::set<std::string> funded;
      for (const auto& wr : weighted) {
        if (wr.weight <= 0.0) continue;
        funded.insert(wr.record.problem_id);
        dataset.push_back(TrainExample{by_id.at(wr.record.problem_id)->input,
                                       wr.record.output, wr.weight});
      }
      for (const auto& p : splits.train)
        if (!funded.count(p.id)) ++zero_survivors;
      dataset_size = static_cast<long long>(dataset.size());

      if (cfg.mix.lambda < 1.0 && !dataset.empty()) {
        dataset = estep::mix_with_reference(dataset, train_references, cfg.mix.lambda,
                                            dataset.size() + train_references.size(),
                                            rng::derive_seed(cfg.master_seed, "mix", iter));
        dataset_size = static_cast<long long>(dataset.size());
      }

      if (io.enabled()) {
        auto name = "iter_" + detail::two_digit(iter);
        estep::save_records(kept, io.dir / "datasets" / (name + ".jsonl"));
        estep::save_dataset_manifest(io.dir / "datasets" / (name + ".manifest.json"), gen,
                                     rng::derive_seed(cfg.master_seed, "gen", iter), source_id,
                                     kept);
      }
    }

    if (dataset.empty()) {
      // nothing survived the filter: skip training, carry the policy forward
      IterationRecord rec = detail::measure(current, splits, iter, max_len,
                                            ckpt::policy_id(current));
      rec.dataset_size = 0;
      rec.problems_with_zero_survivors = zero_survivors;
      rec.skipped = true;
      result.records.push_back(rec);
      continue;
    }

    AnyPolicy improved;
    std::vector<mstep::CurvePoint> curve;
    if (result.base.is_neural()) {
      auto tr = mstep::train_policy(result.base.neural(), dataset, splits.val, cfg.train,
                                    max_len, rng::derive_seed(cfg.master_seed, "train", iter));
      improved = AnyPolicy(std::move(tr.policy));
      curve = std::move(tr.curve);
    } else {
      improved = AnyPolicy(mstep::tabular_mstep_closed_form(result.base.tabular(), dataset));
    }

    std::string ckpt_id;
    if (io.enabled()) {
      auto name = "iter_" + detail::two_digit(iter);
      ckpt_id = ckpt::save(improved, io.dir / "checkpoints" / (name + ".ckpt"));
      io::atomic_write(io.dir / "curves" / (name + ".csv"), mstep::curve_csv(curve));
    } else {
      ckpt_id = ckpt::policy_id(improved);
    }

    IterationRecord rec = detail::measure(improved, splits, iter, max_len, ckpt_id);
    rec.dataset_size = dataset_size;
    rec.problems_with_zero_survivors = zero_survivors;
    result.records.push_back(rec);
    current = std::move(improved);
  }

  result.final_policy = std::move(current);
  return result;
}

// ----------------------------------------------------------------------------
// Exact EM on enumerable instances
// ----------------------------------------------------------------------------

// Tabular policy, exhaustive E-step posterior, closed-form M-step. Each
// iteration records the bound and the slack of both monotonicity
// inequalities:  L(p_new, q_new) >= L(p_old, q_new) >= L(p_old, q_old).
inline RunResult run_exact_em(const ExperimentConfig& cfg, const RunIO& io) {
  cfg.validate();
  RunResult result;
  result.problems = tasks::gen_problem_set(cfg.task, rng::derive_seed(cfg.master_seed, "problems"));
  const tasks::ProblemSet& set = result.problems;
  auto splits = detail::make_splits(set, nullptr);
  const int32_t max_len = cfg.gen.decode.max_len;

  for (const auto& p : splits.train) result.train_ids.push_back(p.id);
  result.base = AnyPolicy(TabularPolicy(set.vocab, cfg.policy.window));
  result.base_id = ckpt::policy_id(result.base);

  if (io.enabled()) {
    std::filesystem::create_directories(io.dir / "checkpoints");
    tasks::save_problem_set(set, io.dir);
    ckpt::save(result.base, io.dir / "checkpoints" / "base.ckpt");
  }

  result.records.push_back(detail::measure(result.base, splits, 0, max_len, result.base_id));

  TabularPolicy current = result.base.tabular();
  std::optional<elbo::QMap> q_prev;

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    result.base_hash_checks.push_back(ckpt::policy_id(result.base) == result.base_id);

    elbo::QMap q;
    long long dataset_size = 0;
    int zero_support = 0;
    std::vector<TrainExample> dataset;
    for (const auto& problem : splits.train) {
      auto post = elbo::exact_posterior(current, problem, max_len);
      if (post.support.empty()) {
        ++zero_support;
        continue;
      }
      for (size_t i = 0; i < post.support.size(); ++i)
        dataset.push_back(TrainExample{problem.input, post.support[i], post.weights[i]});
      dataset_size += static_cast<long long>(post.support.size());
      q.emplace(problem.id, std::move(post));
    }
    if (q.empty())
      throw GenerationError("exact-em: no problem has posterior support");

    std::vector<tasks::Problem> supported;
    for (const auto& problem : splits.train)
      if (q.count(problem.id)) supported.push_back(problem);

    const LogProb L_old_qnew = elbo::compute_elbo_exact(current, q, supported);
    const LogProb L_old_qold =
        q_prev.has_value() ? elbo::compute_elbo_exact(current, *q_prev, supported) : L_old_qnew;

    TabularPolicy improved = mstep::tabular_mstep_closed_form(result.base.tabular(), dataset);
    const LogProb L_new_qnew = elbo::compute_elbo_exact(improved, q, supported);
    if (!L_new_qnew.finite() || !L_old_qnew.finite() || !L_old_qold.finite())
      throw TrainingDiverged("exact-em: bound left the policy support");

    AnyPolicy improved_any(improved);
    std::string ckpt_id;
    if (io.enabled()) {
      ckpt_id = ckpt::save(improved_any,
                           io.dir / "checkpoints" / ("iter_" + detail::two_digit(iter) + ".ckpt"));
    } else {
      ckpt_id = ckpt::policy_id(improved_any);
    }

    IterationRecord rec = detail::measure(improved_any, splits, iter, max_len, ckpt_id);
    rec.dataset_size = dataset_size;
    rec.problems_with_zero_survivors = zero_support;
    rec.elbo = L_new_qnew.value;
    rec.elbo_slack_estep = L_old_qnew.value - L_old_qold.value;
    rec.elbo_slack_mstep = L_new_qnew.value - L_old_qnew.value;
    result.records.push_back(rec);

    current = improved;
    q_prev = std::move(q);
  }

  result.final_policy = AnyPolicy(std::move(current));
  return result;
}

// ----------------------------------------------------------------------------
// Distillation
// ----------------------------------------------------------------------------

// Generate from a (fixed) teacher checkpoint, improve the student's own base.
// The one-per-problem variant caps the fine-tuning set at a single solution
// per problem.
inline RunResult run_distillation(const std::string& teacher_checkpoint,
                                  const ExperimentConfig& student_cfg, const RunIO& io) {
  ExperimentConfig cfg = student_cfg;
  cfg.mode = RunMode::Distill;
  cfg.teacher_checkpoint = teacher_checkpoint;
  return run_self_training(cfg, io);
}

// ----------------------------------------------------------------------------
// Ablations
// ----------------------------------------------------------------------------

struct ComparisonResult {
  std::vector<std::pair<std::string, RunResult>> arms;  // (arm name, result)

  std::string csv() const {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [arm, result] : arms) {
      for (const auto& rec : result.records) {
        auto push = [&](const char* metric, double v) {
          rows.push_back({arm, std::to_string(rec.iteration), metric, io::format_double(v)});
        };
        push("train_reward", rec.train_reward);
        push("val_reward", rec.val_reward);
        push("test_reward", rec.test_reward);
        push("dataset_size", static_cast<double>(rec.dataset_size));
      }
    }
    return io::to_csv({"arm", "iteration", "metric", "value"}, rows);
  }
};

// ----------------------------------------------------------------------------
// Artifacts
// ----------------------------------------------------------------------------

inline void write_iteration_records(const std::vector<IterationRecord>& records,
                                    const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& r : records) rows.push_back(r.to_json());
  io::atomic_write(path, io::to_jsonl(rows));
}

inline void write_manifest(const ExperimentConfig& cfg, const RunResult& result,
                           const std::filesystem::path& dir, const std::string& config_hash,
                           double wall_ms) {
  json checkpoints = json::object();
  for (const auto& rec : result.records)
    checkpoints["iter_" + detail::two_digit(rec.iteration)] = rec.checkpoint;
  json j = {{"schema_version", 1},
            {"experiment_id", "exp-" + config_hash.substr(0, 8) + "-s" +
                                  std::to_string(cfg.master_seed)},
            {"mode", config::mode_name(cfg.mode)},
            {"master_seed", cfg.master_seed},
            {"config_hash", config_hash},
            {"base_checkpoint", result.base_id},
            {"checkpoints", checkpoints},
            {"base_hash_checks", result.base_hash_checks},
            {"total_samples_generated", result.total_samples_generated},
            {"wall_clock_ms", wall_ms}};
  io::atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

namespace detail {

// Write config.json (byte-hashed for the manifest), iterations.jsonl and
// manifest.json for one completed run directory.
inline std::string write_config(const ExperimentConfig& cfg, const RunIO& io) {
  const std::string config_bytes = cfg.to_json().dump(2) + "\n";
  if (io.enabled()) {
    std::filesystem::create_directories(io.dir);
    io::atomic_write(io.dir / "config.json", config_bytes);
  }
  return hex64(fnv1a64(config_bytes));
}

inline void finalize_run_dir(const ExperimentConfig& cfg, const RunResult& result,
                             const RunIO& io, const std::string& config_hash,
                             std::chrono::steady_clock::time_point t0) {
  if (!io.enabled()) return;
  write_iteration_records(result.records, io.dir / "iterations.jsonl");
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(cfg, result, io.dir, config_hash, wall_ms);
}

// One complete run directory for a non-ablation config.
inline RunResult run_leaf(const ExperimentConfig& cfg, const RunIO& io,
                          const tasks::ProblemSet* preset = nullptr,
                          const std::vector<size_t>* train_subset = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string config_hash = write_config(cfg, io);
  RunResult result = cfg.mode == RunMode::ExactEm
                         ? run_exact_em(cfg, io)
                         : run_self_training(cfg, io, preset, train_subset);
  finalize_run_dir(cfg, result, io, config_hash, t0);
  return result;
}

}  // namespace detail

// I iterations at N samples per problem versus a single iteration at I*N:
// the same total sampling budget spent iteratively or all at once.
inline ComparisonResult run_ablation_single_iter_3x(const ExperimentConfig& base_cfg,
                                                    const RunIO& io) {
  ComparisonResult cmp;

  ExperimentConfig multi = base_cfg;
  multi.mode = RunMode::Restem;
  RunIO multi_io{io.enabled() ? io.dir / "arm_multi_iter" : "", io.threads};
  cmp.arms.push_back({"multi_iter", detail::run_leaf(multi, multi_io)});

  ExperimentConfig single = base_cfg;
  single.mode = RunMode::Restem;
  single.gen.samples_per_problem = base_cfg.gen.samples_per_problem * base_cfg.iterations;
  single.iterations = 1;
  RunIO single_io{io.enabled() ? io.dir / "arm_single_iter" : "", io.threads};
  cmp.arms.push_back({"single_iter_big", detail::run_leaf(single, single_io)});

  if (io.enabled()) io::atomic_write(io.dir / "comparison.csv", cmp.csv());
  return cmp;
}

// One full run per training-set size, on nested subsets of the train split.
inline ComparisonResult run_ablation_dataset_size(const ExperimentConfig& base_cfg,
                                                  const RunIO& io) {
  ComparisonResult cmp;
  tasks::ProblemSet set =
      tasks::gen_problem_set(base_cfg.task, rng::derive_seed(base_cfg.master_seed, "problems"));
  const size_t n_train = set.split_indices("train").size();

  // one fixed shuffle; prefixes give nested subsets
  std::vector<size_t> order(n_train);
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto engine = rng::make_engine(rng::derive_seed(base_cfg.master_seed, "subsample"));
  rng::shuffle(order, engine);

  for (int size : base_cfg.ablation_sizes) {
    std::vector<size_t> subset(order.begin(), order.begin() + size);
    ExperimentConfig cfg = base_cfg;
    cfg.mode = RunMode::Restem;
    std::string arm = "size_" + std::to_string(size);
    RunIO arm_io{io.enabled() ? io.dir / ("arm_" + arm) : "", io.threads};
    cmp.arms.push_back({arm, detail::run_leaf(cfg, arm_io, &set, &subset)});
  }
  if (io.enabled()) io::atomic_write(io.dir / "comparison.csv", cmp.csv());
  return cmp;
}

// Run the configured mode, writing the experiment directory when io.dir is
// set. Ablation modes produce one complete run directory per arm plus a
// comparison.csv; the returned result (and the top-level records file) is the
// primary arm's.
inline RunResult run_experiment(const ExperimentConfig& cfg, const RunIO& io) {
  if (cfg.mode == RunMode::SingleIter3x || cfg.mode == RunMode::DatasetSize) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string config_hash = detail::write_config(cfg, io);
    ComparisonResult cmp = cfg.mode == RunMode::SingleIter3x
                               ? run_ablation_single_iter_3x(cfg, io)
                               : run_ablation_dataset_size(cfg, io);
    RunResult result = std::move(cmp.arms.front().second);
    detail::finalize_run_dir(cfg, result, io, config_hash, t0);
    return result;
  }
  return detail::run_leaf(cfg, io);
}

}  // namespace selftrain::emloop
