#pragma once

// Runtime policy wrapper: a value-semantic variant over the tabular and
// neural parameterizations. Policies are plain values — copying one is an
// independent clone, so "fine-tune a clone, keep the base frozen" is the
// copy constructor.

#include <span>
#include <variant>

#include "selftrain/decode.hpp"
#include "selftrain/neural_policy.hpp"
#include "selftrain/tabular_policy.hpp"

namespace selftrain {

enum class PolicyKind { Tabular, Neural };

class AnyPolicy {
 public:
  AnyPolicy() : v_(TabularPolicy{}) {}
  AnyPolicy(TabularPolicy p) : v_(std::move(p)) {}
  AnyPolicy(NeuralPolicy p) : v_(std::move(p)) {}

  PolicyKind kind() const {
    return std::holds_alternative<TabularPolicy>(v_) ? PolicyKind::Tabular
                                                     : PolicyKind::Neural;
  }
  bool is_tabular() const { return kind() == PolicyKind::Tabular; }
  bool is_neural() const { return kind() == PolicyKind::Neural; }

  TabularPolicy& tabular() { return std::get<TabularPolicy>(v_); }
  const TabularPolicy& tabular() const { return std::get<TabularPolicy>(v_); }
  NeuralPolicy& neural() { return std::get<NeuralPolicy>(v_); }
  const NeuralPolicy& neural() const { return std::get<NeuralPolicy>(v_); }

  const Vocab& vocab() const {
    return std::visit([](const auto& p) -> const Vocab& { return p.vocab(); }, v_);
  }
  int window() const {
    return std::visit([](const auto& p) { return p.window(); }, v_);
  }
  std::vector<double> context_logits(std::span<const TokenId> ctx) const {
    return std::visit([&](const auto& p) { return p.context_logits(ctx); }, v_);
  }

 private:
  std::variant<TabularPolicy, NeuralPolicy> v_;
};

static_assert(LogitModel<AnyPolicy>);
static_assert(LogitModel<TabularPolicy>);
static_assert(LogitModel<NeuralPolicy>);

// Independent copy; mutating the clone leaves the source untouched.
template <typename P>
P clone_base(const P& policy) {
  return policy;
}

}  // namespace selftrain
