#pragma once

// Decoding over any logit-producing policy: tempered softmax, top-k masking,
// greedy argmax, ancestral sampling, and exact sequence log-probabilities.
//
// Everything here is a free function template over the LogitModel concept so
// the same code path serves tabular and neural policies (and the runtime
// variant wrapper around them).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "selftrain/common.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/types.hpp"

namespace selftrain {

template <typename P>
concept LogitModel = requires(const P& p, std::span<const TokenId> ctx) {
  { p.vocab() } -> std::convertible_to<const Vocab&>;
  { p.window() } -> std::convertible_to<int>;
  { p.context_logits(ctx) } -> std::convertible_to<std::vector<double>>;
};

struct DecodeParams {
  enum class Mode { TemperatureSample, Greedy };

  double temperature = 0.7;
  int32_t top_k = 0;       // 0 means "full vocabulary"
  int32_t max_len = 16;    // total tokens including eos
  Mode mode = Mode::TemperatureSample;

  void validate(const Vocab& v) const {
    (void)v;
    if (mode == Mode::Greedy) return;  // greedy ignores temperature and top_k
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw InvalidArgument("decode: temperature must be positive");
    if (top_k < 0) throw InvalidArgument("decode: top_k must be >= 0");
    if (max_len < 1) throw InvalidArgument("decode: max_len must be positive");
  }

  // Values above the vocabulary size clamp to it (a config asking for the
  // conventional 40 works on any vocabulary); 0 means full support.
  int32_t effective_top_k(const Vocab& v) const {
    return top_k == 0 ? v.size() : std::min(top_k, v.size());
  }
};

namespace detail {

// Stable tempered softmax that tolerates -inf logits (hard zeros from
// tabular rows). exp(-inf) contributes 0.
inline std::vector<double> tempered_softmax(std::span<const double> logits,
                                            double temperature) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double z : logits) max_logit = std::max(max_logit, z);
  if (!std::isfinite(max_logit))
    throw InvalidArgument("softmax: no finite logit");
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    double z = logits[i];
    out[i] = std::isinf(z) ? 0.0 : std::exp((z - max_logit) / temperature);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

// Argmax with ties broken toward the lowest token index.
inline size_t argmax_lowest(std::span<const double> values) {
  size_t best = 0;
  for (size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace detail

// Tempered softmax over finite logits: p_i = exp(z_i/t) / sum_j exp(z_j/t),
// computed with max subtraction.
inline std::vector<double> softmax_with_temperature(std::span<const double> logits,
                                                    double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidArgument("softmax: temperature must be positive");
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  for (double z : logits)
    if (!std::isfinite(z)) throw InvalidArgument("softmax: non-finite logit");
  return detail::tempered_softmax(logits, temperature);
}

// Distribution over the next token given (input ++ prefix). Temperature mode
// applies the tempered softmax and, when top_k is narrower than the
// vocabulary, keeps only the k largest logits (ties toward lower token index)
// and renormalizes. Greedy mode returns a one-hot at the argmax.
template <LogitModel P>
std::vector<double> next_token_distribution(const P& policy,
                                            std::span<const TokenId> input,
                                            std::span<const TokenId> prefix,
                                            const DecodeParams& params) {
  params.validate(policy.vocab());
  const auto ctx = context_window(input, prefix, policy.window());
  std::vector<double> logits = policy.context_logits(ctx);

  if (params.mode == DecodeParams::Mode::Greedy) {
    std::vector<double> out(logits.size(), 0.0);
    out[detail::argmax_lowest(logits)] = 1.0;
    return out;
  }

  std::vector<double> probs = detail::tempered_softmax(logits, params.temperature);
  const int32_t k = params.effective_top_k(policy.vocab());
  if (k < policy.vocab().size()) {
    std::vector<size_t> order(probs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return logits[a] > logits[b];  // stable: equal logits keep index order
    });
    std::vector<double> masked(probs.size(), 0.0);
    double total = 0.0;
    for (int32_t i = 0; i < k; ++i) {
      masked[order[static_cast<size_t>(i)]] = probs[order[static_cast<size_t>(i)]];
      total += probs[order[static_cast<size_t>(i)]];
    }
    for (double& p : masked) p /= total;
    return masked;
  }
  return probs;
}

template <LogitModel P>
std::vector<double> next_token_distribution(const P& policy, const TokenSeq& input,
                                            const TokenSeq& prefix,
                                            const DecodeParams& params) {
  return next_token_distribution(policy, std::span<const TokenId>(input.ids),
                                 std::span<const TokenId>(prefix.ids), params);
}

// Ancestral sampling (or greedy walk) until eos or max_len tokens.
template <LogitModel P>
TokenSeq sample_sequence(const P& policy, const TokenSeq& input,
                         const DecodeParams& params, rng::Engine& engine) {
  params.validate(policy.vocab());
  TokenSeq out;
  while (static_cast<int32_t>(out.ids.size()) < params.max_len) {
    auto dist = next_token_distribution(policy, std::span<const TokenId>(input.ids),
                                        std::span<const TokenId>(out.ids), params);
    TokenId tok;
    if (params.mode == DecodeParams::Mode::Greedy) {
      tok = static_cast<TokenId>(detail::argmax_lowest(dist));
    } else {
      tok = static_cast<TokenId>(rng::sample_categorical(dist, engine));
    }
    out.ids.push_back(tok);
    if (tok == policy.vocab().eos_id) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

template <LogitModel P>
TokenSeq sample_sequence(const P& policy, const TokenSeq& input,
                         const DecodeParams& params, uint64_t seed) {
  auto engine = rng::make_engine(seed);
  return sample_sequence(policy, input, params, engine);
}

// Deterministic greedy decode: a pure function of (policy, input).
template <LogitModel P>
TokenSeq greedy_decode(const P& policy, const TokenSeq& input, int32_t max_len) {
  DecodeParams p;
  p.mode = DecodeParams::Mode::Greedy;
  p.max_len = max_len;
  auto engine = rng::make_engine(0);
  return sample_sequence(policy, input, p, engine);
}

// log p(y|x) = sum_t log p(y_t | y_<t, x) at temperature 1 over the full
// vocabulary (no top-k masking). A step with probability exactly zero yields
// the flagged minus-infinity sentinel.
template <LogitModel P>
LogProb sequence_log_prob(const P& policy, const TokenSeq& input, const TokenSeq& output) {
  DecodeParams full;
  full.temperature = 1.0;
  full.top_k = 0;
  full.max_len = std::numeric_limits<int32_t>::max();
  LogProb total;
  std::span<const TokenId> prefix(output.ids);
  for (size_t t = 0; t < output.ids.size(); ++t) {
    auto dist = next_token_distribution(policy, std::span<const TokenId>(input.ids),
                                        prefix.subspan(0, t), full);
    double p = dist[static_cast<size_t>(output.ids[t])];
    if (p <= 0.0) return LogProb::zero_probability();
    total += LogProb::of(std::log(p));
  }
  return total;
}

}  // namespace selftrain
