#pragma once

// Exact evidence-lower-bound machinery for enumerable instances (vocabulary
// <= 4 tokens, output length <= 5: a few hundred sequences, enumerated
// exhaustively).
//
// For a binary correctness reward r and variational distribution q over
// terminated outputs, the bound on log P(success | x) is
//
//   L(p, q) = sum_y q(y) log r(x,y)  -  sum_y q(y) log( q(y) / p(y|x) )
//
// with 0 log 0 = 0. The exact E-step posterior q*(y) ~ r(x,y) p(y|x) makes
// the bound tight at log sum_{correct y} p(y|x); alternating it with the
// closed-form tabular fit increases L monotonically.

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "selftrain/decode.hpp"
#include "selftrain/tasks.hpp"

namespace selftrain::elbo {

// All terminated sequences with at most max_len tokens (payload of 0 to
// max_len-1 non-eos tokens plus eos), in lexicographic payload order.
inline std::vector<TokenSeq> enumerate_terminated(const Vocab& vocab, int max_len) {
  std::vector<TokenSeq> out;
  std::vector<TokenId> payload;
  std::function<void()> walk = [&]() {
    out.push_back(make_terminated(payload, vocab));
    if (static_cast<int>(payload.size()) + 1 >= max_len) return;
    for (TokenId id = 0; id < vocab.size(); ++id) {
      if (id == vocab.eos_id) continue;
      payload.push_back(id);
      walk();
      payload.pop_back();
    }
  };
  walk();
  return out;
}

// Unterminated sequences of exactly max_len non-eos tokens: the truncated
// mass that never reaches eos. Together with enumerate_terminated these
// partition all decode outcomes, so their probabilities sum to 1.
inline std::vector<TokenSeq> enumerate_truncated(const Vocab& vocab, int max_len) {
  std::vector<TokenSeq> out;
  std::vector<TokenId> payload;
  std::function<void()> walk = [&]() {
    if (static_cast<int>(payload.size()) == max_len) {
      out.push_back(make_seq(payload));
      return;
    }
    for (TokenId id = 0; id < vocab.size(); ++id) {
      if (id == vocab.eos_id) continue;
      payload.push_back(id);
      walk();
      payload.pop_back();
    }
  };
  walk();
  return out;
}

// A variational distribution over terminated outputs of one problem:
// normalized weights on an explicit support.
struct ExactPosterior {
  std::vector<TokenSeq> support;
  std::vector<double> weights;
};

using QMap = std::map<std::string, ExactPosterior>;

// Exact E-step posterior q*(y) ~ r(x,y) p(y|x) over all terminated sequences
// up to max_len. Empty support means the policy places zero probability on
// every correct output.
template <LogitModel P>
ExactPosterior exact_posterior(const P& policy, const tasks::Problem& problem,
                               int max_len) {
  ExactPosterior q;
  double total = 0.0;
  for (const auto& y : enumerate_terminated(policy.vocab(), max_len)) {
    if (tasks::verify_binary(problem, y, policy.vocab()) != 1) continue;
    LogProb lp = sequence_log_prob(policy, problem.input, y);
    if (!lp.finite()) continue;
    const double mass = std::exp(lp.value);
    if (mass <= 0.0) continue;
    q.support.push_back(y);
    q.weights.push_back(mass);
    total += mass;
  }
  for (double& w : q.weights) w /= total;
  return q;
}

namespace detail {

// Per-problem bound with a caller-supplied reward. q support outside the
// policy's support (or on zero-reward outputs) drives the bound to -inf.
template <LogitModel P>
LogProb elbo_one(const P& policy, const tasks::Problem& problem,
                 const ExactPosterior& q,
                 const std::function<double(const TokenSeq&)>& reward) {
  LogProb total = LogProb::of(0.0);
  for (size_t i = 0; i < q.support.size(); ++i) {
    const double qi = q.weights[i];
    if (qi <= 0.0) continue;  // 0 log 0 = 0
    const double r = reward(q.support[i]);
    if (r <= 0.0) return LogProb::zero_probability();
    LogProb lp = sequence_log_prob(policy, problem.input, q.support[i]);
    if (!lp.finite()) return LogProb::zero_probability();
    total += LogProb::of(qi * std::log(r) - qi * (std::log(qi) - lp.value));
  }
  return total;
}

}  // namespace detail

// Mean ELBO over problems, with rewards from each problem's verifier.
template <LogitModel P>
LogProb compute_elbo_exact(const P& policy, const QMap& q,
                           std::span<const tasks::Problem> problems) {
  LogProb sum = LogProb::of(0.0);
  for (const auto& problem : problems) {
    auto it = q.find(problem.id);
    if (it == q.end()) throw InvalidArgument("compute_elbo_exact: missing q for " + problem.id);
    auto reward = [&](const TokenSeq& y) {
      return static_cast<double>(tasks::verify_binary(problem, y, policy.vocab()));
    };
    sum += detail::elbo_one(policy, problem, it->second, reward);
  }
  if (!sum.finite()) return sum;
  return LogProb::of(sum.value / static_cast<double>(problems.size()));
}

// Same bound with an arbitrary reward function (used by tests to build
// instances with several correct outputs without going through a task kind).
template <LogitModel P>
LogProb compute_elbo_exact(const P& policy, const tasks::Problem& problem,
                           const ExactPosterior& q,
                           const std::function<double(const TokenSeq&)>& reward) {
  return detail::elbo_one(policy, problem, q, reward);
}

}  // namespace selftrain::elbo
