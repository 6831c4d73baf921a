#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "selftrain/checkpoint.hpp"
#include "selftrain/mstep.hpp"
#include "test_support.hpp"

using namespace selftrain;
using namespace selftrain::mstep;

namespace {

Vocab abc_vocab() {
  Vocab v;
  v.tokens = {"a", "b", "c", "#"};
  v.eos_id = 3;
  return v;
}

std::vector<TrainExample> toy_dataset(const Vocab& v) {
  return {
      TrainExample{make_seq({0}), make_terminated({1}, v), 1.0},
      TrainExample{make_seq({1}), make_terminated({2, 0}, v), 0.5},
      TrainExample{make_seq({2, 2}), make_terminated({0}, v), 2.0},
  };
}

}  // namespace

TEST_CASE("loss: indicator weights reduce to the plain mean NLL") {
  NeuralPolicy p(abc_vocab(), 3, 3, 4, 5);
  auto data = toy_dataset(p.vocab());
  for (auto& ex : data) ex.weight = 1.0;
  double weighted = weighted_nll_loss(p, data);
  double plain = 0.0;
  for (const auto& ex : data) plain -= sequence_log_prob(p, ex.input, ex.target).value;
  plain /= static_cast<double>(data.size());
  CHECK(weighted == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("loss: all-zero weights cost nothing") {
  NeuralPolicy p(abc_vocab(), 3, 3, 4, 5);
  auto data = toy_dataset(p.vocab());
  for (auto& ex : data) ex.weight = 0.0;
  CHECK(weighted_nll_loss(p, data) == 0.0);
}

TEST_CASE("loss: linear in the weights") {
  NeuralPolicy p(abc_vocab(), 3, 3, 4, 5);
  auto data = toy_dataset(p.vocab());
  const double base = weighted_nll_loss(p, data);
  for (auto& ex : data) ex.weight *= 2.0;
  CHECK(weighted_nll_loss(p, data) == doctest::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("loss: empty dataset is an error, zero-probability is infinite") {
  NeuralPolicy p(abc_vocab(), 3, 3, 4, 5);
  std::vector<TrainExample> empty;
  CHECK_THROWS_AS(weighted_nll_loss(p, empty), InvalidArgument);

  TabularPolicy t(abc_vocab(), 3);
  t.set_row({0}, {1.0, 0.0, 0.0, 0.0});
  std::vector<TrainExample> dead = {
      TrainExample{make_seq({0}), make_terminated({1}, t.vocab()), 1.0}};
  CHECK(std::isinf(weighted_nll_loss(t, dead)));
  // but a zero-weight example never touches the dead branch
  dead[0].weight = 0.0;
  CHECK(weighted_nll_loss(t, dead) == 0.0);
}

TEST_CASE("closed form: weighted counts normalize, unseen tokens get exact zero") {
  Vocab v = abc_vocab();
  TabularPolicy base(v, 4);
  // single-step outputs from an empty input: context key is the input token
  std::vector<TrainExample> data = {
      TrainExample{make_seq({2}), make_terminated({0}, v), 2.0},
      TrainExample{make_seq({2}), make_terminated({1}, v), 1.0},
  };
  TabularPolicy fit = tabular_mstep_closed_form(base, data);
  const auto* row = fit.find_row(std::vector<TokenId>{2});
  REQUIRE(row != nullptr);
  CHECK((*row)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK((*row)[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK((*row)[2] == 0.0);
  CHECK((*row)[3] == 0.0);
}

TEST_CASE("closed form: grid search over the simplex confirms the maximizer") {
  // objective(theta) = 2 log theta_a + 1 log theta_b over the 3-simplex
  // (vocab has 4 entries but only a and b carry counts; any mass elsewhere
  // is wasted, so restrict the scan to (a, b)).
  double best_objective = -1e18;
  double best_a = 0.0, best_b = 0.0;
  const int grid = 200;
  for (int i = 1; i < grid; ++i) {
    for (int j = 1; j < grid - i; ++j) {
      const double a = static_cast<double>(i) / grid;
      const double b = static_cast<double>(j) / grid;
      const double obj = 2.0 * std::log(a) + 1.0 * std::log(b);
      if (obj > best_objective) {
        best_objective = obj;
        best_a = a;
        best_b = b;
      }
    }
  }
  CHECK(best_a == doctest::Approx(2.0 / 3.0).epsilon(0.02));
  CHECK(best_b == doctest::Approx(1.0 / 3.0).epsilon(0.03));
}

TEST_CASE("closed form: epsilon-perturbations never beat the fit") {
  Vocab v = abc_vocab();
  TabularPolicy base(v, 4);
  std::vector<TrainExample> data = {
      TrainExample{make_seq({0}), make_terminated({0}, v), 0.7},
      TrainExample{make_seq({0}), make_terminated({1}, v), 0.2},
      TrainExample{make_seq({0}), make_terminated({2}, v), 1.3},
  };
  TabularPolicy fit = tabular_mstep_closed_form(base, data);
  const auto* row = fit.find_row(std::vector<TokenId>{0});
  REQUIRE(row != nullptr);
  // weighted log-likelihood of one context under a candidate row
  const std::vector<double> w = {0.7, 0.2, 1.3, 0.0};
  auto objective = [&](const std::vector<double>& q) {
    double obj = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
      if (w[i] == 0.0) continue;
      if (q[i] <= 0.0) return -std::numeric_limits<double>::infinity();
      obj += w[i] * std::log(q[i]);
    }
    return obj;
  };
  const double fit_obj = objective(*row);
  const double eps = 1e-3;
  auto engine = rng::make_engine(23);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> other(4);
    double total = 0.0;
    for (double& x : other) {
      x = rng::unit(engine) + 1e-6;
      total += x;
    }
    for (double& x : other) x /= total;
    std::vector<double> mixed(4);
    for (size_t i = 0; i < 4; ++i) mixed[i] = (1.0 - eps) * (*row)[i] + eps * other[i];
    CHECK(objective(mixed) <= fit_obj + 1e-12);
  }
}

TEST_CASE("closed form: all weight on one token gives a delta row") {
  Vocab v = abc_vocab();
  TabularPolicy base(v, 4);
  std::vector<TrainExample> data = {
      TrainExample{make_seq({1}), make_terminated({}, v), 3.0}};  // straight to eos
  TabularPolicy fit = tabular_mstep_closed_form(base, data);
  const auto* row = fit.find_row(std::vector<TokenId>{1});
  REQUIRE(row != nullptr);
  CHECK((*row)[3] == 1.0);
}

TEST_CASE("closed form: unseen contexts keep the base distribution") {
  Vocab v = abc_vocab();
  TabularPolicy base(v, 4);
  base.set_row({2}, {0.25, 0.25, 0.25, 0.25});
  base.set_row({0, 0}, {0.7, 0.1, 0.1, 0.1});
  std::vector<TrainExample> data = {
      TrainExample{make_seq({1}), make_terminated({0}, v), 1.0}};
  TabularPolicy fit = tabular_mstep_closed_form(base, data);
  const auto* untouched = fit.find_row(std::vector<TokenId>{0, 0});
  REQUIRE(untouched != nullptr);
  CHECK((*untouched)[0] == 0.7);
  CHECK(fit.next_token_probs(std::vector<TokenId>{2})[0] == 0.25);
}

TEST_CASE("early stopping: the documented trace") {
  // validation values .5 .6 .6 .6 with patience 2: the improvement at the
  // second evaluation is kept, the third and fourth are stale, stop there.
  EarlyStopper stopper(2);
  CHECK(stopper.observe(0.5));
  CHECK(!stopper.should_stop());
  CHECK(stopper.observe(0.6));
  CHECK(!stopper.should_stop());
  CHECK(!stopper.observe(0.6));
  CHECK(!stopper.should_stop());
  CHECK(!stopper.observe(0.6));
  CHECK(stopper.should_stop());
  CHECK(stopper.best() == 0.6);
  CHECK(stopper.best_index() == 2);
  CHECK(stopper.evaluations() == 4);
}

TEST_CASE("training: memorizes a single example") {
  Vocab v = abc_vocab();
  NeuralPolicy base(v, 4, 4, 8, 11);
  TokenSeq x = make_seq({0, 2});
  TokenSeq y = make_terminated({1, 0}, v);
  std::vector<TrainExample> data = {TrainExample{x, y, 1.0}};

  tasks::Problem probe;  // reverse problem checking exactly y's payload
  probe.id = "memo";
  probe.kind = tasks::TaskKind::Reverse;
  probe.input = x;
  probe.answer_key.reversed_ids = {1, 0};

  TrainConfig cfg;
  cfg.step_size = 0.2;
  cfg.momentum = 0.9;
  cfg.batch_size = 1;
  cfg.max_steps = 500;
  cfg.eval_every = 50;
  cfg.patience = 10;
  auto result = train_policy(base, data, std::vector<tasks::Problem>{probe}, cfg, 6, 123);
  TokenSeq decoded = greedy_decode(result.policy, x, 6);
  CHECK(decoded == y);
  CHECK(result.best_val_reward == 1.0);
}

TEST_CASE("training: identical seeds give identical parameters") {
  Vocab v = abc_vocab();
  NeuralPolicy base(v, 4, 4, 8, 17);
  auto data = toy_dataset(v);
  std::vector<tasks::Problem> no_val;
  TrainConfig cfg;
  cfg.step_size = 0.05;
  cfg.batch_size = 2;
  cfg.max_steps = 120;
  cfg.eval_every = 40;
  cfg.patience = 3;
  auto a = train_policy(base, data, no_val, cfg, 6, 321);
  auto b = train_policy(base, data, no_val, cfg, 6, 321);
  CHECK(ckpt::serialize(AnyPolicy(a.policy)) == ckpt::serialize(AnyPolicy(b.policy)));
}

TEST_CASE("training: returned checkpoint has the best evaluated reward") {
  tasks::TaskSpec spec;
  spec.kind = tasks::TaskKind::Reverse;
  spec.tiny = true;
  spec.len_min = 2;
  spec.len_max = 3;
  spec.n_train = 6;
  spec.n_val = 4;
  auto set = tasks::gen_problem_set(spec, 9);
  NeuralPolicy base(set.vocab, 6, 4, 12, 31);
  auto refs = set.reference_examples("train");
  auto val = set.split_problems("val");
  TrainConfig cfg;
  cfg.step_size = 0.1;
  cfg.batch_size = 4;
  cfg.max_steps = 400;
  cfg.eval_every = 40;
  cfg.patience = 4;
  auto result = train_policy(base, refs, val, cfg, 5, 77);
  for (const auto& point : result.curve)
    CHECK(result.best_val_reward >= point.val_reward);
}

TEST_CASE("training: oversized step size diverges loudly") {
  Vocab v = abc_vocab();
  NeuralPolicy base(v, 4, 4, 8, 19);
  auto data = toy_dataset(v);
  std::vector<tasks::Problem> no_val;
  TrainConfig cfg;
  cfg.step_size = 1e12;
  cfg.batch_size = 3;
  cfg.max_steps = 50;
  cfg.eval_every = 50;
  cfg.patience = 2;
  CHECK_THROWS_AS(train_policy(base, data, no_val, cfg, 6, 1), TrainingDiverged);
}

TEST_CASE("sft: parameter-identical to indicator-weighted training") {
  tasks::TaskSpec spec;
  spec.kind = tasks::TaskKind::Reverse;
  spec.tiny = true;
  spec.len_min = 2;
  spec.len_max = 3;
  spec.n_train = 5;
  auto set = tasks::gen_problem_set(spec, 13);
  NeuralPolicy base(set.vocab, 6, 4, 8, 37);
  auto refs = set.reference_examples("train");
  auto train_problems = set.split_problems("train");
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_steps = 100;
  cfg.eval_every = 50;
  cfg.patience = 5;
  auto a = sft_train(base, refs, train_problems, cfg, 5, 555);
  auto b = train_policy(base, refs, train_problems, cfg, 5, 555);
  CHECK(ckpt::serialize(AnyPolicy(a.policy)) == ckpt::serialize(AnyPolicy(b.policy)));
}

TEST_CASE("sft: zero training steps returns the base clone") {
  Vocab v = abc_vocab();
  NeuralPolicy base(v, 4, 4, 8, 41);
  auto refs = toy_dataset(v);
  std::vector<tasks::Problem> no_val;
  TrainConfig cfg;
  cfg.max_steps = 0;
  auto result = sft_train(base, refs, no_val, cfg, 6, 1);
  CHECK(ckpt::serialize(AnyPolicy(result.policy)) == ckpt::serialize(AnyPolicy(base)));
}

TEST_CASE("sft: memorizes a 20-problem reverse task") {
  tasks::TaskSpec spec;
  spec.kind = tasks::TaskKind::Reverse;
  spec.len_min = 3;
  spec.len_max = 5;
  spec.n_train = 20;
  auto set = tasks::gen_problem_set(spec, 29);
  NeuralPolicy base(set.vocab, 8, 8, 32, 43);
  auto refs = set.reference_examples("train");
  auto train_problems = set.split_problems("train");
  TrainConfig cfg;
  cfg.step_size = 0.08;
  cfg.momentum = 0.9;
  cfg.batch_size = 16;
  cfg.max_steps = 2500;
  cfg.eval_every = 100;
  cfg.patience = 8;
  auto result = sft_train(base, refs, train_problems, cfg, 8, 71);
  CHECK(eval::greedy_accuracy(result.policy, train_problems, 8) >= 0.95);
}

TEST_CASE("training curve serializes to CSV") {
  std::vector<CurvePoint> curve = {{100, 1.5, 0.25}, {200, 0.9, 0.5}};
  const std::string csv = curve_csv(curve);
  CHECK(csv == "step,train_loss,val_reward\n100,1.5,0.25\n200,0.9,0.5\n");
}
