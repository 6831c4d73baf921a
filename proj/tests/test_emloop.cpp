#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "selftrain/cli.hpp"
#include "selftrain/emloop.hpp"
#include "test_support.hpp"

using namespace selftrain;
using namespace selftrain::emloop;
namespace fs = std::filesystem;

namespace {

config::ExperimentConfig tiny_tabular_config(uint64_t seed = 1) {
  config::ExperimentConfig cfg;
  cfg.mode = config::RunMode::Restem;
  cfg.master_seed = seed;
  cfg.iterations = 2;
  cfg.task.kind = tasks::TaskKind::Reverse;
  cfg.task.tiny = true;
  // equal-length inputs so tabular context windows never alias across problems
  cfg.task.len_min = 3;
  cfg.task.len_max = 3;
  cfg.task.n_train = 8;
  cfg.task.n_val = 4;
  cfg.task.n_test = 4;
  cfg.policy.kind = PolicyKind::Tabular;
  cfg.policy.window = 8;
  cfg.gen.samples_per_problem = 32;
  cfg.gen.cap_per_problem = 10;
  cfg.gen.decode.temperature = 1.0;
  cfg.gen.decode.top_k = 0;
  cfg.gen.decode.max_len = 5;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("selftrain_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("restem: record per iteration plus iteration zero, metrics bounded") {
  auto cfg = tiny_tabular_config();
  RunResult result = run_self_training(cfg, RunIO{});
  REQUIRE(result.records.size() == 3);
  CHECK(result.records[0].iteration == 0);
  CHECK(result.records[0].dataset_size == 0);
  CHECK(result.records[0].checkpoint == result.base_id);
  for (const auto& rec : result.records) {
    CHECK(rec.train_reward >= 0.0);
    CHECK(rec.train_reward <= 1.0);
    CHECK(rec.val_reward >= 0.0);
    CHECK(rec.val_reward <= 1.0);
    CHECK(rec.test_reward >= 0.0);
    CHECK(rec.test_reward <= 1.0);
    CHECK(rec.dataset_size >= 0);
  }
  for (bool ok : result.base_hash_checks) CHECK(ok);
  CHECK(result.total_samples_generated == 2LL * 32 * 8);
  // self-training on enumerably small reverse problems should help quickly
  CHECK(result.records[2].train_reward >= result.records[0].train_reward);
}

TEST_CASE("restem: test problems never enter the training pool") {
  auto cfg = tiny_tabular_config(7);
  TempDir dir("audit");
  RunResult result = run_self_training(cfg, RunIO{dir.path});
  std::set<std::string> train_ids(result.train_ids.begin(), result.train_ids.end());
  std::set<std::string> test_ids;
  for (size_t i : result.problems.split_indices("test"))
    test_ids.insert(result.problems.problems[i].id);
  for (const auto& id : test_ids) CHECK(!train_ids.count(id));
  // datasets on disk reference train problems only
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    char name[32];
    std::snprintf(name, sizeof(name), "iter_%03d.jsonl", iter);
    const fs::path path = dir.path / "datasets" / name;
    if (!fs::exists(path)) continue;
    for (const auto& row : io::read_jsonl(path))
      CHECK(train_ids.count(row.at("problem_id").get<std::string>()));
  }
}

TEST_CASE("restem: zero survivors skips training and carries the policy") {
  config::ExperimentConfig cfg;
  cfg.mode = config::RunMode::Restem;
  cfg.master_seed = 5;
  cfg.iterations = 2;
  cfg.task.kind = tasks::TaskKind::ExprTarget;
  cfg.task.n_train = 4;
  cfg.task.n_val = 3;
  cfg.task.n_test = 3;
  cfg.policy.kind = PolicyKind::Tabular;
  cfg.gen.samples_per_problem = 4;
  cfg.gen.cap_per_problem = 4;
  cfg.gen.decode.max_len = 1;  // outputs can never verify
  RunResult result = run_self_training(cfg, RunIO{});
  REQUIRE(result.records.size() == 3);
  for (size_t i = 1; i < result.records.size(); ++i) {
    const auto& rec = result.records[i];
    CHECK(rec.skipped);
    CHECK(rec.dataset_size == 0);
    CHECK(rec.problems_with_zero_survivors == 4);
    CHECK(rec.checkpoint == result.base_id);  // policy carried forward
  }
}

TEST_CASE("star-greedy: at most one distinct sample per problem per iteration") {
  auto cfg = tiny_tabular_config(11);
  cfg.mode = config::RunMode::StarGreedy;
  cfg.iterations = 1;
  TempDir dir("star");
  run_self_training(cfg, RunIO{dir.path});
  auto rows = io::read_jsonl(dir.path / "datasets" / "iter_001.jsonl");
  std::map<std::string, std::set<std::vector<TokenId>>> outputs;
  for (const auto& row : rows)
    outputs[row.at("problem_id").get<std::string>()].insert(
        row.at("output").get<std::vector<TokenId>>());
  for (const auto& [pid, outs] : outputs) CHECK(outs.size() <= 1);
}

TEST_CASE("sft-baseline: one training pass over the references") {
  auto cfg = tiny_tabular_config(13);
  cfg.mode = config::RunMode::SftBaseline;
  cfg.iterations = 3;  // ignored by the baseline
  RunResult result = run_self_training(cfg, RunIO{});
  REQUIRE(result.records.size() == 2);
  CHECK(result.records[1].dataset_size == 8);  // one reference per train problem
  CHECK(result.records[1].problems_with_zero_survivors == 0);
  // tabular closed form on all references memorizes the train split
  CHECK(result.records[1].train_reward == 1.0);
  CHECK(result.total_samples_generated == 0);
}

TEST_CASE("distill: teacher equal to the base reproduces one restem iteration") {
  auto cfg = tiny_tabular_config(17);
  cfg.iterations = 1;
  TempDir dir("distill");

  // the tabular base is the fresh uniform table; save it as the teacher
  tasks::ProblemSet set =
      tasks::gen_problem_set(cfg.task, rng::derive_seed(cfg.master_seed, "problems"));
  const fs::path teacher_path = dir.path / "teacher.ckpt";
  ckpt::save(AnyPolicy(TabularPolicy(set.vocab, cfg.policy.window)), teacher_path);

  RunResult plain = run_self_training(cfg, RunIO{});
  RunResult distilled = run_distillation(teacher_path.string(), cfg, RunIO{});
  REQUIRE(plain.records.size() == distilled.records.size());
  for (size_t i = 0; i < plain.records.size(); ++i) {
    CHECK(plain.records[i].checkpoint == distilled.records[i].checkpoint);
    CHECK(plain.records[i].train_reward == distilled.records[i].train_reward);
  }
  CHECK(ckpt::policy_id(plain.final_policy) == ckpt::policy_id(distilled.final_policy));
}

TEST_CASE("distill: vocabulary mismatch is rejected") {
  auto cfg = tiny_tabular_config(19);
  TempDir dir("distill_bad");
  const fs::path teacher_path = dir.path / "teacher.ckpt";
  ckpt::save(AnyPolicy(TabularPolicy(tasks::full_vocab(), 8)), teacher_path);
  cfg.mode = config::RunMode::Distill;
  cfg.teacher_checkpoint = teacher_path.string();
  CHECK_THROWS_AS(run_self_training(cfg, RunIO{}), InvalidArgument);
}

TEST_CASE("distill: one sample per problem caps the dataset") {
  auto cfg = tiny_tabular_config(23);
  cfg.iterations = 1;
  TempDir dir("distill_one");
  tasks::ProblemSet set =
      tasks::gen_problem_set(cfg.task, rng::derive_seed(cfg.master_seed, "problems"));
  const fs::path teacher_path = dir.path / "teacher.ckpt";
  ckpt::save(AnyPolicy(testing::reference_delta_policy(set, cfg.policy.window)), teacher_path);

  cfg.mode = config::RunMode::Distill;
  cfg.teacher_checkpoint = teacher_path.string();
  RunResult multi = run_self_training(cfg, RunIO{});
  cfg.distill_one_per_problem = true;
  RunResult single = run_self_training(cfg, RunIO{});
  CHECK(single.records[1].dataset_size <= multi.records[1].dataset_size);
  CHECK(single.records[1].dataset_size == 8);  // delta teacher solves everything
}

TEST_CASE("exact-em: both inequalities hold for five iterations") {
  config::ExperimentConfig cfg;
  cfg.mode = config::RunMode::ExactEm;
  cfg.master_seed = 3;
  cfg.iterations = 5;
  cfg.task.kind = tasks::TaskKind::Reverse;
  cfg.task.tiny = true;
  cfg.task.len_min = 2;
  cfg.task.len_max = 3;
  cfg.task.n_train = 3;
  cfg.policy.kind = PolicyKind::Tabular;
  cfg.gen.decode.max_len = 4;
  cfg.gen.samples_per_problem = 1;
  cfg.gen.cap_per_problem = 1;

  RunResult result = run_exact_em(cfg, RunIO{});
  REQUIRE(result.records.size() == 6);
  double prev_elbo = -std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < result.records.size(); ++i) {
    const auto& rec = result.records[i];
    REQUIRE(rec.elbo.has_value());
    REQUIRE(rec.elbo_slack_estep.has_value());
    REQUIRE(rec.elbo_slack_mstep.has_value());
    CHECK(*rec.elbo_slack_estep >= -1e-12);
    CHECK(*rec.elbo_slack_mstep >= -1e-12);
    CHECK(*rec.elbo >= prev_elbo - 1e-12);
    prev_elbo = *rec.elbo;
  }
  // unique answers: the closed form converges to certainty (ELBO 0)
  CHECK(*result.records.back().elbo == doctest::Approx(0.0));
  CHECK(result.records.back().train_reward == 1.0);
}

TEST_CASE("ablation: iterative and single-shot arms spend the same samples") {
  auto cfg = tiny_tabular_config(29);
  cfg.iterations = 3;
  cfg.gen.samples_per_problem = 8;
  cfg.gen.cap_per_problem = 4;
  TempDir dir("ab3x");
  ComparisonResult cmp = run_ablation_single_iter_3x(cfg, RunIO{dir.path});
  REQUIRE(cmp.arms.size() == 2);
  CHECK(cmp.arms[0].second.total_samples_generated ==
        cmp.arms[1].second.total_samples_generated);
  CHECK(cmp.arms[0].second.total_samples_generated == 3LL * 8 * 8);
  CHECK(fs::exists(dir.path / "comparison.csv"));
  CHECK(fs::exists(dir.path / "arm_multi_iter" / "iterations.jsonl"));
  CHECK(fs::exists(dir.path / "arm_single_iter" / "iterations.jsonl"));
  const std::string csv = io::read_file(dir.path / "comparison.csv");
  CHECK(csv.find("multi_iter") != std::string::npos);
  CHECK(csv.find("single_iter_big") != std::string::npos);
}

TEST_CASE("ablation: dataset sizes give nested train subsets") {
  auto cfg = tiny_tabular_config(31);
  cfg.mode = config::RunMode::DatasetSize;
  cfg.ablation_sizes = {2, 5, 8};
  ComparisonResult cmp = run_ablation_dataset_size(cfg, RunIO{});
  REQUIRE(cmp.arms.size() == 3);
  std::vector<std::set<std::string>> subsets;
  for (const auto& [arm, result] : cmp.arms)
    subsets.emplace_back(result.train_ids.begin(), result.train_ids.end());
  CHECK(subsets[0].size() == 2);
  CHECK(subsets[1].size() == 5);
  CHECK(subsets[2].size() == 8);
  for (size_t i = 1; i < subsets.size(); ++i)
    for (const auto& id : subsets[i - 1]) CHECK(subsets[i].count(id));
}

TEST_CASE("ablation: the full-size arm reproduces the plain run") {
  auto cfg = tiny_tabular_config(37);
  RunResult plain = run_self_training(cfg, RunIO{});

  cfg.mode = config::RunMode::DatasetSize;
  cfg.ablation_sizes = {8};
  ComparisonResult cmp = run_ablation_dataset_size(cfg, RunIO{});
  const RunResult& arm = cmp.arms[0].second;
  REQUIRE(arm.records.size() == plain.records.size());
  for (size_t i = 0; i < plain.records.size(); ++i)
    CHECK(arm.records[i].checkpoint == plain.records[i].checkpoint);
}

TEST_CASE("experiment directory: layout and deterministic reruns") {
  auto cfg = tiny_tabular_config(41);
  TempDir a("det_a");
  TempDir b("det_b");
  run_experiment(cfg, RunIO{a.path});
  run_experiment(cfg, RunIO{b.path});
  for (const char* name : {"config.json", "iterations.jsonl", "problems.jsonl",
                           "problems.meta.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(a.path / name));
    CHECK(io::read_file(a.path / name) == io::read_file(b.path / name));
  }
  CHECK(fs::exists(a.path / "manifest.json"));
  CHECK(fs::exists(a.path / "checkpoints" / "base.ckpt"));
  CHECK(fs::exists(a.path / "checkpoints" / "iter_001.ckpt"));
  // manifest carries the restart audit
  auto manifest = io::json::parse(io::read_file(a.path / "manifest.json"));
  for (bool ok : manifest.at("base_hash_checks").get<std::vector<bool>>()) CHECK(ok);
  // no stray temp files from atomic writes
  for (const auto& entry : fs::recursive_directory_iterator(a.path))
    CHECK(entry.path().string().find(".tmp") == std::string::npos);
  // records parse back
  auto rows = io::read_jsonl(a.path / "iterations.jsonl");
  CHECK(rows.size() == 3);
  auto rec = IterationRecord::from_json(rows[1]);
  CHECK(rec.iteration == 1);
}

TEST_CASE("iteration records: json round trip") {
  IterationRecord rec;
  rec.iteration = 4;
  rec.train_reward = 0.75;
  rec.val_reward = 0.5;
  rec.test_reward = 0.25;
  rec.dataset_size = 61;
  rec.problems_with_zero_survivors = 2;
  rec.skipped = false;
  rec.elbo = -1.25;
  rec.elbo_slack_estep = 0.0;
  rec.elbo_slack_mstep = 1e-13;
  rec.checkpoint = "deadbeef";
  auto back = IterationRecord::from_json(rec.to_json());
  CHECK(back.iteration == rec.iteration);
  CHECK(back.dataset_size == rec.dataset_size);
  CHECK(*back.elbo == *rec.elbo);
  CHECK(*back.elbo_slack_mstep == *rec.elbo_slack_mstep);
  CHECK(back.checkpoint == rec.checkpoint);
}
