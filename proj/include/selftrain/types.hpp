#pragma once

// Core sequence types: a finite vocabulary with a designated end-of-sequence
// token, token sequences, fixed-window context extraction, and the weighted
// training example that the sampling and fitting stages exchange.

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "selftrain/common.hpp"

namespace selftrain {

using TokenId = int32_t;

struct Vocab {
  std::vector<std::string> tokens;
  TokenId eos_id = 0;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }

  void validate() const {
    if (size() < 2) throw InvalidArgument("vocab: size must be >= 2");
    if (eos_id < 0 || eos_id >= size()) throw InvalidArgument("vocab: eos_id out of range");
    std::set<std::string> distinct(tokens.begin(), tokens.end());
    if (static_cast<int32_t>(distinct.size()) != size())
      throw InvalidArgument("vocab: tokens must be distinct");
  }

  TokenId id_of(std::string_view tok) const {
    for (size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == tok) return static_cast<TokenId>(i);
    return -1;
  }

  std::string render(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) out += tokens[static_cast<size_t>(id)];
    return out;
  }

  // Identity of the vocabulary; checkpoints embed it and loaders verify it.
  uint64_t hash() const {
    uint64_t h = kFnvOffset;
    for (const auto& t : tokens) {
      h = fnv1a64(t, h);
      h = fnv1a64("\x1f", h);  // separator so {"ab","c"} != {"a","bc"}
    }
    return fnv1a64_u64(static_cast<uint64_t>(eos_id), h);
  }
};

struct TokenSeq {
  std::vector<TokenId> ids;      // includes the trailing eos when terminated
  bool terminated = false;

  size_t length() const { return ids.size(); }

  // The sequence without its trailing eos.
  std::span<const TokenId> payload() const {
    if (terminated && !ids.empty())
      return std::span<const TokenId>(ids.data(), ids.size() - 1);
    return std::span<const TokenId>(ids.data(), ids.size());
  }

  void validate(const Vocab& v, size_t max_len) const {
    if (ids.size() > max_len) throw InvalidArgument("token sequence exceeds max_len");
    for (TokenId id : ids)
      if (id < 0 || id >= v.size()) throw InvalidArgument("token id out of range");
    if (terminated && (ids.empty() || ids.back() != v.eos_id))
      throw InvalidArgument("terminated sequence must end with eos");
  }

  friend bool operator==(const TokenSeq& a, const TokenSeq& b) {
    return a.terminated == b.terminated && a.ids == b.ids;
  }
  friend bool operator<(const TokenSeq& a, const TokenSeq& b) {
    if (a.ids != b.ids)
      return std::lexicographical_compare(a.ids.begin(), a.ids.end(),
                                          b.ids.begin(), b.ids.end());
    return a.terminated < b.terminated;
  }
};

inline TokenSeq make_seq(std::vector<TokenId> ids) { return TokenSeq{std::move(ids), false}; }

inline TokenSeq make_terminated(std::vector<TokenId> payload, const Vocab& v) {
  payload.push_back(v.eos_id);
  return TokenSeq{std::move(payload), true};
}

// Last `window` tokens of (input ++ generated prefix); shorter contexts stay
// shorter. Policies condition on exactly this view.
inline std::vector<TokenId> context_window(std::span<const TokenId> input,
                                           std::span<const TokenId> prefix,
                                           int window) {
  const size_t total = input.size() + prefix.size();
  const size_t keep = std::min(total, static_cast<size_t>(window));
  std::vector<TokenId> out;
  out.reserve(keep);
  size_t start = total - keep;
  for (size_t pos = start; pos < total; ++pos) {
    out.push_back(pos < input.size() ? input[pos]
                                     : prefix[pos - input.size()]);
  }
  return out;
}

// One weighted supervised pair: fit the policy to emit `target` given `input`.
struct TrainExample {
  TokenSeq input;
  TokenSeq target;
  double weight = 1.0;
};

}  // namespace selftrain
