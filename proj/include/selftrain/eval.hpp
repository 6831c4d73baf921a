#pragma once

// Evaluation suite: greedy accuracy, the unbiased pass@k estimator with its
// sampling harness, majority voting over extracted answers, transfer
// evaluation on a held-out task, and the train/test-gap report.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selftrain/decode.hpp"
#include "selftrain/io.hpp"
#include "selftrain/tasks.hpp"

namespace selftrain::eval {

using json = nlohmann::json;

// ----------------------------------------------------------------------------
// pass@k
// ----------------------------------------------------------------------------

namespace detail {

// Exact binomial coefficient; all C(n,k) for n <= 64 fit in uint64_t.
// Multiplicative form with a 128-bit intermediate, each division exact.
inline uint64_t binom_u64(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (int i = 0; i < k; ++i) {
    c = c * static_cast<unsigned __int128>(n - i);
    c /= static_cast<unsigned __int128>(i + 1);
  }
  return static_cast<uint64_t>(c);
}

}  // namespace detail

// Probability that a uniformly random k-subset of n samples (c of them
// correct) contains at least one correct sample: 1 - C(n-c,k)/C(n,k).
// Exact rational evaluation for n <= 64; a running product of ratios beyond
// that (binomials overflow, the product does not).
inline double pass_at_k_estimator(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw InvalidArgument("pass_at_k: need 0 <= c <= n");
  if (k < 1 || k > n) throw InvalidArgument("pass_at_k: need 1 <= k <= n");
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;
  if (n <= 64) {
    const uint64_t total = detail::binom_u64(n, k);
    const uint64_t miss = detail::binom_u64(n - c, k);
    return static_cast<double>(total - miss) / static_cast<double>(total);
  }
  double miss = 1.0;
  for (int i = 0; i < k; ++i)
    miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - miss;
}

struct PassAtKCurve {
  int n = 0;  // samples drawn per problem
  std::vector<std::pair<int, double>> points;           // (k, mean estimator)
  std::vector<std::pair<std::string, int>> per_problem; // (id, correct count)

  double value_at(int k) const {
    for (const auto& [kk, v] : points)
      if (kk == k) return v;
    throw InvalidArgument("pass@k curve: k not evaluated");
  }
};

// Per problem: draw n samples, count correct, average the estimator across
// problems for each requested k.
template <LogitModel P>
PassAtKCurve eval_pass_at_k(const P& policy, std::span<const tasks::Problem> problems,
                            int n, std::span<const int> k_list,
                            const DecodeParams& decode, uint64_t seed) {
  for (int k : k_list)
    if (k > n) throw InvalidArgument("eval_pass_at_k: k exceeds sample count n");
  PassAtKCurve curve;
  curve.n = n;
  std::vector<int> corrects;
  for (size_t pi = 0; pi < problems.size(); ++pi) {
    auto engine = rng::make_engine(rng::derive_seed(seed, "pass-at-k", pi));
    int c = 0;
    for (int j = 0; j < n; ++j) {
      TokenSeq y = sample_sequence(policy, problems[pi].input, decode, engine);
      c += tasks::verify_binary(problems[pi], y, policy.vocab());
    }
    corrects.push_back(c);
    curve.per_problem.push_back({problems[pi].id, c});
  }
  for (int k : k_list) {
    double mean = 0.0;
    for (int c : corrects) mean += pass_at_k_estimator(n, c, k);
    curve.points.push_back({k, problems.empty() ? 0.0 : mean / static_cast<double>(problems.size())});
  }
  return curve;
}

// ----------------------------------------------------------------------------
// Majority voting
// ----------------------------------------------------------------------------

struct VoteResult {
  std::optional<std::vector<TokenId>> answer;  // modal extracted answer
  bool correct = false;
  int votes = 0;
  int valid_samples = 0;  // samples with an extractable answer
};

// Sample n outputs, extract answer segments (malformed outputs are excluded
// from the vote), return the modal answer with ties broken toward the
// lexicographically smallest. All n malformed counts as incorrect.
template <LogitModel P>
VoteResult majority_vote(const P& policy, const tasks::Problem& problem, int n,
                         const DecodeParams& decode, rng::Engine& engine) {
  if (n < 1) throw InvalidArgument("majority_vote: n must be positive");
  std::map<std::vector<TokenId>, int> tally;
  for (int j = 0; j < n; ++j) {
    TokenSeq y = sample_sequence(policy, problem.input, decode, engine);
    auto answer = tasks::extract_answer(y, policy.vocab());
    if (answer.has_value()) tally[*answer] += 1;
  }
  VoteResult res;
  if (tally.empty()) return res;  // no valid sample: incorrect
  for (const auto& [answer, count] : tally) {
    res.valid_samples += count;
    // map iterates in lexicographic order, so ">" keeps the smallest on ties
    if (count > res.votes) {
      res.answer = answer;
      res.votes = count;
    }
  }
  res.correct = tasks::answer_correct(problem, *res.answer, policy.vocab());
  return res;
}

template <LogitModel P>
double majority_vote_accuracy(const P& policy, std::span<const tasks::Problem> problems,
                              int n, const DecodeParams& decode, uint64_t seed,
                              std::vector<VoteResult>* details = nullptr) {
  double correct = 0.0;
  for (size_t pi = 0; pi < problems.size(); ++pi) {
    auto engine = rng::make_engine(rng::derive_seed(seed, "vote", pi));
    VoteResult r = majority_vote(policy, problems[pi], n, decode, engine);
    correct += r.correct ? 1.0 : 0.0;
    if (details) details->push_back(std::move(r));
  }
  return problems.empty() ? 0.0 : correct / static_cast<double>(problems.size());
}

// ----------------------------------------------------------------------------
// Greedy accuracy
// ----------------------------------------------------------------------------

// Fraction of problems whose greedy decode verifies. Deterministic.
template <LogitModel P>
double greedy_accuracy(const P& policy, std::span<const tasks::Problem> problems,
                       int32_t max_len, std::vector<bool>* per_problem = nullptr) {
  double correct = 0.0;
  for (const auto& problem : problems) {
    TokenSeq y = greedy_decode(policy, problem.input, max_len);
    bool ok = tasks::verify_binary(problem, y, policy.vocab()) == 1;
    correct += ok ? 1.0 : 0.0;
    if (per_problem) per_problem->push_back(ok);
  }
  return problems.empty() ? 0.0 : correct / static_cast<double>(problems.size());
}

// ----------------------------------------------------------------------------
// Reports
// ----------------------------------------------------------------------------

struct EvalOptions {
  bool greedy = true;
  std::vector<int> pass_ks;      // empty = skip pass@k
  int pass_n = 64;               // samples per problem for pass@k
  bool majority = false;
  int majority_n = 64;
  DecodeParams decode;           // sampling params (default: temperature 1, full support)
  int32_t greedy_max_len = 16;

  EvalOptions() {
    decode.temperature = 1.0;
    decode.top_k = 0;
    decode.max_len = 16;
  }
};

struct EvalReport {
  std::string checkpoint_id;
  std::string split;
  int n_problems = 0;
  std::optional<double> greedy_accuracy;
  std::optional<PassAtKCurve> pass_at_k;
  std::optional<double> majority_accuracy;
  int majority_n = 0;
  json per_problem = json::array();
  DecodeParams decode;

  json to_json() const {
    json j = {{"schema_version", 1},
              {"checkpoint", checkpoint_id},
              {"split", split},
              {"n_problems", n_problems},
              {"decode",
               {{"temperature", decode.temperature},
                {"top_k", decode.top_k},
                {"max_len", decode.max_len}}},
              {"per_problem", per_problem}};
    if (greedy_accuracy.has_value()) j["greedy_accuracy"] = *greedy_accuracy;
    if (pass_at_k.has_value()) {
      json pts = json::array();
      for (const auto& [k, v] : pass_at_k->points) pts.push_back({{"k", k}, {"value", v}});
      j["pass_at_k"] = {{"n", pass_at_k->n}, {"curve", pts}};
    }
    if (majority_accuracy.has_value())
      j["majority_vote"] = {{"n", majority_n}, {"accuracy", *majority_accuracy}};
    return j;
  }

  std::string curve_csv() const {
    std::vector<std::vector<std::string>> rows;
    if (pass_at_k.has_value())
      for (const auto& [k, v] : pass_at_k->points)
        rows.push_back({std::to_string(k), io::format_double(v)});
    return io::to_csv({"k", "value"}, rows);
  }
};

template <LogitModel P>
EvalReport build_eval_report(const P& policy, const std::string& checkpoint_id,
                             std::span<const tasks::Problem> problems,
                             const std::string& split, const EvalOptions& options,
                             uint64_t seed) {
  EvalReport report;
  report.checkpoint_id = checkpoint_id;
  report.split = split;
  report.n_problems = static_cast<int>(problems.size());
  report.decode = options.decode;

  std::vector<bool> greedy_ok;
  if (options.greedy)
    report.greedy_accuracy = greedy_accuracy(policy, problems, options.greedy_max_len, &greedy_ok);
  if (!options.pass_ks.empty())
    report.pass_at_k = eval_pass_at_k(policy, problems, options.pass_n, options.pass_ks,
                                      options.decode, seed);
  std::vector<VoteResult> votes;
  if (options.majority) {
    report.majority_accuracy = majority_vote_accuracy(policy, problems, options.majority_n,
                                                      options.decode, seed, &votes);
    report.majority_n = options.majority_n;
  }

  for (size_t i = 0; i < problems.size(); ++i) {
    json row = {{"id", problems[i].id}};
    if (options.greedy) row["greedy_correct"] = static_cast<bool>(greedy_ok[i]);
    if (report.pass_at_k.has_value()) row["n_correct"] = report.pass_at_k->per_problem[i].second;
    if (options.majority) row["vote_correct"] = votes[i].correct;
    report.per_problem.push_back(std::move(row));
  }
  return report;
}

// Evaluation on a task family the policy never trained on. The held-out
// problems must use the policy's own vocabulary.
template <LogitModel P>
EvalReport transfer_eval(const P& policy, const std::string& checkpoint_id,
                         std::span<const tasks::Problem> problems, const Vocab& task_vocab,
                         const std::string& split, const EvalOptions& options,
                         uint64_t seed) {
  if (task_vocab.hash() != policy.vocab().hash())
    throw InvalidArgument("transfer_eval: vocabulary mismatch between policy and task");
  return build_eval_report(policy, checkpoint_id, problems, split, options, seed);
}

// ----------------------------------------------------------------------------
// Train/test gap
// ----------------------------------------------------------------------------

struct GapInput {
  int iteration = 0;
  double train_reward = 0.0;
  double test_reward = 0.0;
};

struct GapReport {
  struct Row {
    int iteration;
    double train_reward;
    double test_reward;
    double gap;
  };
  std::vector<Row> rows;
  int peak_test_iteration = 0;

  std::string csv() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows)
      out.push_back({std::to_string(r.iteration), io::format_double(r.train_reward),
                     io::format_double(r.test_reward), io::format_double(r.gap)});
    return io::to_csv({"iteration", "train_reward", "test_reward", "gap"}, out);
  }
};

inline GapReport train_test_gap_report(std::span<const GapInput> records) {
  if (records.size() < 2)
    throw InvalidArgument("train_test_gap_report: need at least 2 iterations");
  GapReport report;
  double best_test = -1.0;
  for (const auto& r : records) {
    report.rows.push_back({r.iteration, r.train_reward, r.test_reward,
                           r.train_reward - r.test_reward});
    if (r.test_reward > best_test) {
      best_test = r.test_reward;
      report.peak_test_iteration = r.iteration;
    }
  }
  return report;
}

}  // namespace selftrain::eval
