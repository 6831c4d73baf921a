#pragma once

// Generate step: sample candidate outputs from a policy, annotate rewards,
// then select and weight the fine-tuning data. All selection rules are pure
// transformations of the record list:
//
//   binary threshold    keep reward-1 records; any tau in (0,1) is identical
//   global threshold    keep scalar reward > tau
//   percentile          per problem, keep >= nearest-rank p-th percentile
//   interpolation       per problem, keep > g*max + (1-g)*mean
//   max selection       exactly one best record per problem
//
// plus weighting (indicator / identity / exp) and optional mixing with
// reference solutions.

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selftrain/decode.hpp"
#include "selftrain/io.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/tasks.hpp"

namespace selftrain::estep {

using json = nlohmann::json;

struct SampleRecord {
  std::string problem_id;
  TokenSeq output;
  tasks::RewardValue reward;
  LogProb logprob;  // under the generating policy, temperature 1, full support
  int iteration = 0;
  std::string source_policy;  // checkpoint id of the generating policy
};

struct GenerationConfig {
  int samples_per_problem = 32;
  DecodeParams decode;
  int cap_per_problem = 10;
  bool dedupe = true;

  void validate() const {
    if (samples_per_problem < 1)
      throw InvalidArgument("generation: samples_per_problem must be positive");
    if (cap_per_problem < 1 || cap_per_problem > samples_per_problem)
      throw InvalidArgument("generation: cap_per_problem must be in [1, samples_per_problem]");
  }
};

struct FilterSpec {
  enum class Mode { BinaryTau, GlobalThreshold, Percentile, Interpolation, RaftMax };
  enum class Weighting { Indicator, Identity, Exp };

  Mode mode = Mode::BinaryTau;
  double tau = 0.5;
  double percentile = 90.0;
  double interp_gamma = 0.5;
  Weighting weighting = Weighting::Indicator;

  void validate() const {
    if (mode == Mode::BinaryTau && !(tau > 0.0 && tau < 1.0))
      throw InvalidArgument("filter: binary mode requires tau in (0,1)");
    if (mode == Mode::Percentile && !(percentile > 0.0 && percentile <= 100.0))
      throw InvalidArgument("filter: percentile must be in (0,100]");
    if (mode == Mode::Interpolation && !(interp_gamma >= 0.0 && interp_gamma <= 1.0))
      throw InvalidArgument("filter: interpolation gamma must be in [0,1]");
  }
};

struct MixSpec {
  double lambda = 1.0;  // 1 = synthetic only, 0 = references only

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw InvalidArgument("mix: lambda must be in [0,1]");
  }
};

struct WeightedRecord {
  SampleRecord record;
  double weight = 1.0;
};

namespace detail {

// Group record indices by problem id, preserving first-occurrence order.
inline std::vector<std::pair<std::string, std::vector<size_t>>> group_by_problem(
    std::span<const SampleRecord> records) {
  std::vector<std::pair<std::string, std::vector<size_t>>> groups;
  std::map<std::string, size_t> where;
  for (size_t i = 0; i < records.size(); ++i) {
    auto it = where.find(records[i].problem_id);
    if (it == where.end()) {
      where.emplace(records[i].problem_id, groups.size());
      groups.push_back({records[i].problem_id, {i}});
    } else {
      groups[it->second].second.push_back(i);
    }
  }
  return groups;
}

inline double scalar_reward_of(const SampleRecord& r) {
  if (!r.reward.scalar.has_value())
    throw InvalidArgument("filter: scalar reward required but not annotated");
  return *r.reward.scalar;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Generation
// ----------------------------------------------------------------------------

// Exactly N annotated records per problem, in problem order then sample
// order. Each problem draws from its own derived stream, so results are
// independent of thread count and byte-identical for a fixed seed.
template <LogitModel P>
std::vector<SampleRecord> generate_samples(const P& policy,
                                           std::span<const tasks::Problem> problems,
                                           const GenerationConfig& config,
                                           uint64_t seed, int iteration,
                                           const std::string& source_policy_id,
                                           bool scalar_mode = false,
                                           int threads = 1) {
  config.validate();
  config.decode.validate(policy.vocab());
  const int n = config.samples_per_problem;
  std::vector<std::vector<SampleRecord>> per_problem(problems.size());

  auto run_problem = [&](size_t pi) {
    const tasks::Problem& problem = problems[pi];
    auto engine = rng::make_engine(rng::derive_seed(seed, "generate", pi));
    auto& out = per_problem[pi];
    out.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
      SampleRecord rec;
      rec.problem_id = problem.id;
      rec.output = sample_sequence(policy, problem.input, config.decode, engine);
      rec.reward = tasks::annotate_reward(problem, rec.output, policy.vocab(), scalar_mode);
      rec.logprob = sequence_log_prob(policy, problem.input, rec.output);
      rec.iteration = iteration;
      rec.source_policy = source_policy_id;
      out.push_back(std::move(rec));
    }
  };

  if (threads > 1 && problems.size() > 1) {
    std::vector<std::future<void>> futures;
    std::atomic<size_t> next{0};
    for (int t = 0; t < threads; ++t) {
      futures.push_back(std::async(std::launch::async, [&]() {
        for (size_t pi = next.fetch_add(1); pi < problems.size(); pi = next.fetch_add(1))
          run_problem(pi);
      }));
    }
    for (auto& f : futures) f.get();
  } else {
    for (size_t pi = 0; pi < problems.size(); ++pi) run_problem(pi);
  }

  std::vector<SampleRecord> records;
  records.reserve(problems.size() * static_cast<size_t>(n));
  for (auto& group : per_problem)
    for (auto& rec : group) records.push_back(std::move(rec));
  return records;
}

// ----------------------------------------------------------------------------
// Dedupe and cap
// ----------------------------------------------------------------------------

// Per problem: drop exact-duplicate outputs (when enabled), then if more than
// cap_per_problem remain, keep a seeded uniform subset of that size. Selection
// is uniform over the survivors; kept records stay in their original order.
inline std::vector<SampleRecord> dedupe_and_cap(std::span<const SampleRecord> records,
                                                const GenerationConfig& config,
                                                uint64_t seed) {
  std::vector<SampleRecord> out;
  auto groups = detail::group_by_problem(records);
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<size_t> kept;
    if (config.dedupe) {
      std::set<std::vector<TokenId>> seen;
      for (size_t idx : groups[gi].second)
        if (seen.insert(records[idx].output.ids).second) kept.push_back(idx);
    } else {
      kept = groups[gi].second;
    }
    if (static_cast<int>(kept.size()) > config.cap_per_problem) {
      auto engine = rng::make_engine(rng::derive_seed(seed, "cap", gi));
      std::vector<size_t> chosen = kept;
      rng::shuffle(chosen, engine);
      chosen.resize(static_cast<size_t>(config.cap_per_problem));
      std::sort(chosen.begin(), chosen.end());
      kept = std::move(chosen);
    }
    for (size_t idx : kept) out.push_back(records[idx]);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Filters
// ----------------------------------------------------------------------------

// Binary rewards: keep exactly the reward-1 records. The output is the same
// set for every tau in (0,1), so tau only gates the argument's validity.
inline std::vector<SampleRecord> filter_binary(std::span<const SampleRecord> records,
                                               double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw InvalidArgument("filter_binary: tau must be in (0,1)");
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (r.reward.binary == 1) out.push_back(r);
  return out;
}

// Scalar rewards: keep records with reward strictly above tau.
inline std::vector<SampleRecord> filter_threshold_global(
    std::span<const SampleRecord> records, double tau) {
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (detail::scalar_reward_of(r) > tau) out.push_back(r);
  return out;
}

// Per problem, keep records with reward >= the nearest-rank p-th percentile
// of that problem's rewards (rank = ceil(p/100 * n), 1-indexed).
inline std::vector<SampleRecord> filter_percentile(std::span<const SampleRecord> records,
                                                   double p) {
  if (!(p > 0.0 && p <= 100.0))
    throw InvalidArgument("filter_percentile: p must be in (0,100]");
  std::vector<SampleRecord> out;
  for (const auto& [pid, idxs] : detail::group_by_problem(records)) {
    std::vector<double> rewards;
    for (size_t idx : idxs) rewards.push_back(detail::scalar_reward_of(records[idx]));
    std::sort(rewards.begin(), rewards.end());
    size_t rank = static_cast<size_t>(
        std::ceil(p / 100.0 * static_cast<double>(rewards.size())));
    rank = std::clamp(rank, size_t{1}, rewards.size());
    const double threshold = rewards[rank - 1];
    for (size_t idx : idxs)
      if (detail::scalar_reward_of(records[idx]) >= threshold)
        out.push_back(records[idx]);
  }
  return out;
}

// Per problem, threshold at g*max + (1-g)*mean of the candidate rewards and
// keep records strictly above it. g=1 keeps nothing (strict inequality
// against the max); g=0 thresholds at the mean.
inline std::vector<SampleRecord> filter_interpolated(std::span<const SampleRecord> records,
                                                     double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw InvalidArgument("filter_interpolated: gamma must be in [0,1]");
  std::vector<SampleRecord> out;
  for (const auto& [pid, idxs] : detail::group_by_problem(records)) {
    double vmax = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (size_t idx : idxs) {
      double r = detail::scalar_reward_of(records[idx]);
      vmax = std::max(vmax, r);
      sum += r;
    }
    const double vmean = sum / static_cast<double>(idxs.size());
    const double threshold = gamma * vmax + (1.0 - gamma) * vmean;
    for (size_t idx : idxs)
      if (detail::scalar_reward_of(records[idx]) > threshold)
        out.push_back(records[idx]);
  }
  return out;
}

// Exactly one record per problem: maximum reward, ties broken by highest
// log-probability, then by lexicographically smallest output.
inline std::vector<SampleRecord> select_raft_max(std::span<const SampleRecord> records) {
  std::vector<SampleRecord> out;
  for (const auto& [pid, idxs] : detail::group_by_problem(records)) {
    size_t best = idxs[0];
    for (size_t k = 1; k < idxs.size(); ++k) {
      const SampleRecord& cand = records[idxs[k]];
      const SampleRecord& cur = records[best];
      const double rc = cand.reward.scalar_or_binary();
      const double rb = cur.reward.scalar_or_binary();
      bool better = false;
      if (rc != rb) {
        better = rc > rb;
      } else if (cand.logprob.as_double() != cur.logprob.as_double()) {
        better = cur.logprob < cand.logprob;
      } else {
        better = cand.output < cur.output;
      }
      if (better) best = idxs[k];
    }
    out.push_back(records[best]);
  }
  return out;
}

inline std::vector<SampleRecord> apply_filter(std::span<const SampleRecord> records,
                                              const FilterSpec& spec) {
  spec.validate();
  switch (spec.mode) {
    case FilterSpec::Mode::BinaryTau: return filter_binary(records, spec.tau);
    case FilterSpec::Mode::GlobalThreshold: return filter_threshold_global(records, spec.tau);
    case FilterSpec::Mode::Percentile: return filter_percentile(records, spec.percentile);
    case FilterSpec::Mode::Interpolation: return filter_interpolated(records, spec.interp_gamma);
    case FilterSpec::Mode::RaftMax: return select_raft_max(records);
  }
  throw InvalidArgument("apply_filter: unknown mode");
}

// ----------------------------------------------------------------------------
// Weighting and mixing
// ----------------------------------------------------------------------------

// indicator: weight 1 on every surviving record.
// identity:  weight = reward (requires non-negative rewards).
// exp:       weight = exp(reward) normalized per problem.
inline std::vector<WeightedRecord> attach_weights(std::span<const SampleRecord> records,
                                                  FilterSpec::Weighting f) {
  std::vector<WeightedRecord> out;
  out.reserve(records.size());
  switch (f) {
    case FilterSpec::Weighting::Indicator:
      for (const auto& r : records) out.push_back({r, 1.0});
      break;
    case FilterSpec::Weighting::Identity:
      for (const auto& r : records) {
        double w = r.reward.scalar_or_binary();
        if (w < 0.0) throw InvalidArgument("attach_weights: identity requires reward >= 0");
        out.push_back({r, w});
      }
      break;
    case FilterSpec::Weighting::Exp: {
      for (const auto& r : records) out.push_back({r, 0.0});
      for (const auto& [pid, idxs] : detail::group_by_problem(records)) {
        double total = 0.0;
        for (size_t idx : idxs) total += std::exp(records[idx].reward.scalar_or_binary());
        for (size_t idx : idxs)
          out[idx].weight = std::exp(records[idx].reward.scalar_or_binary()) / total;
      }
      break;
    }
  }
  return out;
}

// Blend synthetic and reference examples. lambda=1 returns the synthetic set
// verbatim and lambda=0 the references verbatim; in between, each of
// target_size slots draws from the synthetic pool with probability lambda
// (uniformly within the chosen pool, with replacement).
inline std::vector<TrainExample> mix_with_reference(std::span<const TrainExample> synthetic,
                                                    std::span<const TrainExample> references,
                                                    double lambda, size_t target_size,
                                                    uint64_t seed) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw InvalidArgument("mix_with_reference: lambda must be in [0,1]");
  if (lambda > 0.0 && synthetic.empty())
    throw InvalidArgument("mix_with_reference: synthetic pool required but empty");
  if (lambda < 1.0 && references.empty())
    throw InvalidArgument("mix_with_reference: reference pool required but empty");
  if (lambda == 1.0) return {synthetic.begin(), synthetic.end()};
  if (lambda == 0.0) return {references.begin(), references.end()};
  auto engine = rng::make_engine(rng::derive_seed(seed, "mix"));
  std::vector<TrainExample> out;
  out.reserve(target_size);
  for (size_t i = 0; i < target_size; ++i) {
    if (rng::unit(engine) < lambda) {
      out.push_back(synthetic[rng::pick_index(engine, synthetic.size())]);
    } else {
      out.push_back(references[rng::pick_index(engine, references.size())]);
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Persistence
// ----------------------------------------------------------------------------

inline json record_to_json(const SampleRecord& r) {
  json j = {{"problem_id", r.problem_id},
            {"output", r.output.ids},
            {"terminated", r.output.terminated},
            {"reward_binary", r.reward.binary},
            {"iteration", r.iteration},
            {"source_policy", r.source_policy}};
  j["reward_scalar"] = r.reward.scalar.has_value() ? json(*r.reward.scalar) : json(nullptr);
  j["logprob"] = r.logprob.finite() ? json(r.logprob.value) : json(nullptr);
  return j;
}

inline void save_records(std::span<const SampleRecord> records,
                         const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(record_to_json(r));
  io::atomic_write(path, io::to_jsonl(rows));
}

// Per-iteration dataset manifest: config, seed, generating checkpoint, and
// how many samples survived per problem.
inline void save_dataset_manifest(const std::filesystem::path& path,
                                  const GenerationConfig& config, uint64_t seed,
                                  const std::string& policy_id,
                                  std::span<const SampleRecord> survivors) {
  std::map<std::string, int> counts;
  for (const auto& r : survivors) counts[r.problem_id] += 1;
  json j = {{"schema_version", 1},
            {"seed", seed},
            {"policy_checkpoint", policy_id},
            {"samples_per_problem", config.samples_per_problem},
            {"cap_per_problem", config.cap_per_problem},
            {"dedupe", config.dedupe},
            {"survivors_per_problem", counts}};
  io::atomic_write(path, j.dump(2) + "\n");
}

}  // namespace selftrain::estep
