#pragma once

// Improve step: fit the policy to the weighted filtered dataset, always
// restarting from the base checkpoint. Neural policies run minibatch SGD
// (fixed step, optional momentum) with greedy-decode validation reward as
// the early-stopping signal; tabular policies get the closed-form per-context
// maximum-likelihood fit.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selftrain/eval.hpp"
#include "selftrain/io.hpp"
#include "selftrain/policy.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/tasks.hpp"

namespace selftrain::mstep {

struct TrainConfig {
  double step_size = 0.05;
  double momentum = 0.9;
  int batch_size = 32;
  int max_steps = 3000;
  int eval_every = 100;
  int patience = 5;

  void validate() const {
    if (!(step_size > 0.0)) throw InvalidArgument("train: step_size must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw InvalidArgument("train: momentum must be in [0,1)");
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be positive");
    if (max_steps < 0) throw InvalidArgument("train: max_steps must be >= 0");
    if (eval_every < 1) throw InvalidArgument("train: eval_every must be positive");
    if (max_steps > 0 && eval_every > max_steps)
      throw InvalidArgument("train: eval_every must be <= max_steps");
    if (patience < 1) throw InvalidArgument("train: patience must be positive");
  }
};

// Mean weighted negative log-likelihood over the dataset:
//   loss = -(1/|D|) sum_i w_i log p(y_i|x_i)
// Zero-weight examples contribute exactly 0; a positive-weight example with a
// zero-probability step yields +infinity.
template <LogitModel P>
double weighted_nll_loss(const P& policy, std::span<const TrainExample> dataset) {
  if (dataset.empty()) throw InvalidArgument("weighted_nll_loss: empty dataset");
  double total = 0.0;
  for (const auto& ex : dataset) {
    if (!(ex.weight >= 0.0)) throw InvalidArgument("weighted_nll_loss: negative weight");
    if (ex.weight == 0.0) continue;
    LogProb lp = sequence_log_prob(policy, ex.input, ex.target);
    if (!lp.finite()) return std::numeric_limits<double>::infinity();
    total += ex.weight * (-lp.value);
  }
  return total / static_cast<double>(dataset.size());
}

struct CurvePoint {
  int step = 0;
  double train_loss = 0.0;
  double val_reward = 0.0;
};

// Strict-improvement early stopping. Feed one validation value per
// evaluation; stops once the value has failed to improve on the best for
// `patience` consecutive evaluations. Ties do not count as improvement, so
// the retained best is the earliest evaluation reaching the best value.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // true iff this evaluation strictly improved the best value
  bool observe(double value) {
    ++count_;
    if (value > best_) {
      best_ = value;
      best_index_ = count_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_index() const { return best_index_; }  // 1-based evaluation index
  int evaluations() const { return count_; }

 private:
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int best_index_ = 0;
  int stale_ = 0;
  int count_ = 0;
};

struct TrainResult {
  NeuralPolicy policy;            // checkpoint with the best validation reward
  std::vector<CurvePoint> curve;  // one row per evaluation
  double best_val_reward = 0.0;
  int best_step = 0;
  int steps_run = 0;
};

// Minibatch SGD on the weighted NLL from a fresh clone of the base policy.
// Every eval_every steps the mean greedy-decode reward on the validation
// problems is measured; training stops once it has failed to strictly
// improve for `patience` consecutive evaluations (or at max_steps), and the
// snapshot with the best validation reward is returned. With max_steps 0 the
// result is the untouched base clone.
inline TrainResult train_policy(const NeuralPolicy& base,
                                std::span<const TrainExample> dataset,
                                std::span<const tasks::Problem> val_problems,
                                const TrainConfig& config, int32_t eval_max_len,
                                uint64_t seed) {
  config.validate();
  if (dataset.empty()) throw InvalidArgument("train_policy: empty dataset");

  TrainResult result;
  NeuralPolicy policy = clone_base(base);
  NeuralGradient velocity = policy.zero_gradient();
  NeuralPolicy::Workspace ws;

  auto engine = rng::make_engine(rng::derive_seed(seed, "train-shuffle"));
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng::shuffle(order, engine);
  size_t cursor = 0;

  std::optional<NeuralPolicy> best;
  EarlyStopper stopper(config.patience);
  int best_step = 0;
  double loss_accum = 0.0;
  int loss_count = 0;
  std::vector<TrainExample> batch;

  int step = 0;
  for (step = 1; step <= config.max_steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        rng::shuffle(order, engine);
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    double loss_sum = 0.0;
    NeuralGradient grad = weighted_nll_gradient(policy, batch, ws, &loss_sum);
    if (!std::isfinite(loss_sum))
      throw TrainingDiverged("train_policy: non-finite loss at step " + std::to_string(step));
    grad.scale(1.0 / static_cast<double>(batch.size()));
    velocity.scale(config.momentum);
    velocity.add(grad);
    apply_update(policy, velocity, config.step_size);
    loss_accum += loss_sum / static_cast<double>(batch.size());
    loss_count += 1;

    if (step % config.eval_every == 0) {
      const double val = eval::greedy_accuracy(policy, val_problems, eval_max_len);
      result.curve.push_back({step, loss_accum / loss_count, val});
      loss_accum = 0.0;
      loss_count = 0;
      if (stopper.observe(val)) {
        best = policy;
        best_step = step;
      }
      if (stopper.should_stop()) break;
    }
  }

  result.steps_run = std::min(step, config.max_steps);
  if (best.has_value()) {
    result.policy = std::move(*best);
    result.best_val_reward = stopper.best();
    result.best_step = best_step;
  } else {
    // no evaluation ever ran (max_steps < eval_every); return the final state
    result.policy = std::move(policy);
    result.best_val_reward = eval::greedy_accuracy(result.policy, val_problems, eval_max_len);
    result.best_step = result.steps_run;
  }
  return result;
}

// Exact per-context maximizer of the weighted log-likelihood: next-token
// probabilities proportional to weighted counts. Contexts that never appear
// in the dataset keep the base policy's distribution.
inline TabularPolicy tabular_mstep_closed_form(const TabularPolicy& base,
                                               std::span<const TrainExample> dataset) {
  TabularPolicy out = clone_base(base);
  std::map<TabularPolicy::Key, std::vector<double>> counts;
  const size_t V = static_cast<size_t>(base.vocab().size());
  for (const auto& ex : dataset) {
    if (!(ex.weight >= 0.0))
      throw InvalidArgument("tabular_mstep_closed_form: negative weight");
    if (ex.weight == 0.0) continue;
    for (size_t t = 0; t < ex.target.ids.size(); ++t) {
      auto key = context_window(ex.input.ids,
                                std::span<const TokenId>(ex.target.ids.data(), t),
                                base.window());
      auto& row = counts[key];
      if (row.empty()) row.assign(V, 0.0);
      row[static_cast<size_t>(ex.target.ids[t])] += ex.weight;
    }
  }
  for (auto& [key, row] : counts) {
    double total = 0.0;
    for (double c : row) total += c;
    if (total <= 0.0) continue;
    for (double& c : row) c /= total;
    out.set_row(key, row);
  }
  return out;
}

// SFT baseline: train_policy with weight 1 on each reference solution.
inline TrainResult sft_train(const NeuralPolicy& base,
                             std::span<const TrainExample> references,
                             std::span<const tasks::Problem> val_problems,
                             const TrainConfig& config, int32_t eval_max_len,
                             uint64_t seed) {
  if (references.empty()) throw InvalidArgument("sft_train: no references");
  std::vector<TrainExample> weighted(references.begin(), references.end());
  for (auto& ex : weighted) ex.weight = 1.0;
  return train_policy(base, weighted, val_problems, config, eval_max_len, seed);
}

inline std::string curve_csv(std::span<const CurvePoint> curve) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : curve)
    rows.push_back({std::to_string(p.step), io::format_double(p.train_loss),
                    io::format_double(p.val_reward)});
  return io::to_csv({"step", "train_loss", "val_reward"}, rows);
}

}  // namespace selftrain::mstep
