#pragma once

// Tabular autoregressive policy: a map from windowed context to an explicit
// next-token probability row. Rows store probabilities rather than logits so
// the closed-form maximum-likelihood fit can place exact zeros; contexts
// without a stored row fall back to the uniform distribution.

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "selftrain/common.hpp"
#include "selftrain/types.hpp"

namespace selftrain {

class TabularPolicy {
 public:
  using Key = std::vector<TokenId>;
  // Ordered map: serialization and iteration stay deterministic.
  using Table = std::map<Key, std::vector<double>>;

  TabularPolicy() = default;
  TabularPolicy(Vocab vocab, int window) : vocab_(std::move(vocab)), window_(window) {
    vocab_.validate();
    if (window_ < 1) throw InvalidArgument("tabular policy: window must be positive");
  }

  const Vocab& vocab() const { return vocab_; }
  int window() const { return window_; }
  const Table& table() const { return table_; }

  // Row must be a probability vector over the vocabulary.
  void set_row(Key key, std::vector<double> probs) {
    if (static_cast<int32_t>(probs.size()) != vocab_.size())
      throw InvalidArgument("tabular policy: row size mismatch");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw InvalidArgument("tabular policy: row entries must be finite and >= 0");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw InvalidArgument("tabular policy: row must sum to 1");
    table_[std::move(key)] = std::move(probs);
  }

  const std::vector<double>* find_row(std::span<const TokenId> ctx) const {
    auto it = table_.find(Key(ctx.begin(), ctx.end()));
    return it == table_.end() ? nullptr : &it->second;
  }

  std::vector<double> next_token_probs(std::span<const TokenId> ctx) const {
    if (const auto* row = find_row(ctx)) return *row;
    return std::vector<double>(static_cast<size_t>(vocab_.size()),
                               1.0 / vocab_.size());
  }

  // Logit view of the stored row: log p, with -inf at hard zeros. The decode
  // layer's tempered softmax treats exp(-inf) as 0, so p is recovered exactly
  // at temperature 1 and sharpened as p^(1/t) otherwise.
  std::vector<double> context_logits(std::span<const TokenId> ctx) const {
    std::vector<double> probs = next_token_probs(ctx);
    std::vector<double> logits(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) {
      logits[i] = probs[i] > 0.0 ? std::log(probs[i])
                                 : -std::numeric_limits<double>::infinity();
    }
    return logits;
  }

 private:
  Vocab vocab_;
  int window_ = 8;
  Table table_;
};

}  // namespace selftrain
