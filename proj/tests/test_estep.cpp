#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "selftrain/estep.hpp"
#include "test_support.hpp"

using namespace selftrain;
using namespace selftrain::estep;
using selftrain::testing::record;
using selftrain::testing::scalar_record;

namespace {

tasks::ProblemSet tiny_reverse_set(int n, uint64_t seed = 3) {
  tasks::TaskSpec spec;
  spec.kind = tasks::TaskKind::Reverse;
  spec.tiny = true;
  spec.len_min = 2;
  spec.len_max = 3;
  spec.n_train = n;
  return tasks::gen_problem_set(spec, seed);
}

GenerationConfig small_config(int n, int cap) {
  GenerationConfig cfg;
  cfg.samples_per_problem = n;
  cfg.cap_per_problem = cap;
  cfg.decode.temperature = 1.0;
  cfg.decode.top_k = 0;
  cfg.decode.max_len = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generate: exactly N records per problem") {
  auto set = tiny_reverse_set(5);
  TabularPolicy policy(set.vocab, 8);
  auto records = generate_samples(policy, set.problems, small_config(32, 10), 1, 1, "src");
  CHECK(records.size() == 160);
  std::map<std::string, int> counts;
  for (const auto& r : records) counts[r.problem_id] += 1;
  for (const auto& [pid, c] : counts) CHECK(c == 32);
}

TEST_CASE("generate: a reference-delta policy earns reward 1 everywhere") {
  auto set = tiny_reverse_set(4);
  auto policy = testing::reference_delta_policy(set, 8);
  auto records = generate_samples(policy, set.problems, small_config(8, 8), 2, 1, "src");
  for (const auto& r : records) {
    CHECK(r.reward.binary == 1);
    CHECK(r.output.terminated);
    CHECK(r.logprob.finite());
    CHECK(r.logprob.value == doctest::Approx(0.0));
  }
}

TEST_CASE("generate: greedy mode repeats one sample per problem") {
  auto set = tiny_reverse_set(3);
  TabularPolicy policy(set.vocab, 8);
  auto cfg = small_config(6, 6);
  cfg.decode.mode = DecodeParams::Mode::Greedy;
  auto records = generate_samples(policy, set.problems, cfg, 3, 1, "src");
  for (size_t base = 0; base < records.size(); base += 6)
    for (size_t j = 1; j < 6; ++j)
      CHECK(records[base + j].output == records[base].output);
}

TEST_CASE("generate: identical seeds give identical record streams") {
  auto set = tiny_reverse_set(4);
  TabularPolicy policy(set.vocab, 8);
  auto a = generate_samples(policy, set.problems, small_config(16, 8), 9, 2, "src");
  auto b = generate_samples(policy, set.problems, small_config(16, 8), 9, 2, "src");
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].output == b[i].output);
    CHECK(a[i].reward.binary == b[i].reward.binary);
    CHECK(a[i].logprob.as_double() == b[i].logprob.as_double());
  }
  // and thread-count independence
  auto c = generate_samples(policy, set.problems, small_config(16, 8), 9, 2, "src", false, 4);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].output == c[i].output);
}

TEST_CASE("dedupe and cap: 32 distinct correct samples cap to exactly 10") {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 32; ++i) records.push_back(record("p", {i, 99}, 1));
  auto out = dedupe_and_cap(records, small_config(32, 10), 5);
  CHECK(out.size() == 10);
  std::set<std::vector<TokenId>> distinct;
  for (const auto& r : out) distinct.insert(r.output.ids);
  CHECK(distinct.size() == 10);
}

TEST_CASE("dedupe and cap: under the cap everything survives") {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 3; ++i) records.push_back(record("p", {i}, 1));
  auto out = dedupe_and_cap(records, small_config(32, 10), 5);
  CHECK(out.size() == 3);
}

TEST_CASE("dedupe and cap: twenty copies collapse to one") {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 20; ++i) records.push_back(record("p", {1, 2, 3}, 1));
  auto out = dedupe_and_cap(records, small_config(32, 10), 5);
  CHECK(out.size() == 1);
}

TEST_CASE("dedupe and cap: dedupe flag off keeps duplicates, cap still binds") {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 20; ++i) records.push_back(record("p", {1, 2, 3}, 1));
  auto cfg = small_config(32, 10);
  cfg.dedupe = false;
  auto out = dedupe_and_cap(records, cfg, 5);
  CHECK(out.size() == 10);
}

TEST_CASE("binary filter: keeps reward-1 records for any tau in (0,1)") {
  std::vector<SampleRecord> records = {record("a", {0}, 1), record("a", {1}, 0),
                                       record("b", {2}, 1)};
  auto low = filter_binary(records, 0.2);
  REQUIRE(low.size() == 2);
  CHECK(low[0].output.ids == std::vector<TokenId>{0});
  CHECK(low[1].output.ids == std::vector<TokenId>{2});

  for (double tau : {0.01, 0.5, 0.8, 0.99}) {
    auto out = filter_binary(records, tau);
    REQUIRE(out.size() == low.size());
    for (size_t i = 0; i < out.size(); ++i) CHECK(out[i].output == low[i].output);
  }

  std::vector<SampleRecord> none = {record("a", {0}, 0), record("b", {1}, 0)};
  CHECK(filter_binary(none, 0.5).empty());
  CHECK_THROWS_AS(filter_binary(records, 0.0), InvalidArgument);
  CHECK_THROWS_AS(filter_binary(records, 1.0), InvalidArgument);
}

TEST_CASE("global threshold: strict inequality, nested under a rising schedule") {
  std::vector<SampleRecord> records = {scalar_record("a", {0}, 0.2),
                                       scalar_record("a", {1}, 0.5),
                                       scalar_record("b", {2}, 0.9)};
  auto out = filter_threshold_global(records, 0.4);
  CHECK(testing::scalar_rewards_of(out) == std::vector<double>{0.5, 0.9});
  CHECK(filter_threshold_global(records, -1.0).size() == 3);

  // rising tau gives a nested decreasing chain of sets
  std::vector<SampleRecord> pool;
  auto engine = rng::make_engine(12);
  for (int i = 0; i < 60; ++i)
    pool.push_back(scalar_record("p" + std::to_string(i % 5), {i}, rng::unit(engine)));
  std::vector<std::set<std::vector<TokenId>>> chain;
  for (double tau : {0.3, 0.5, 0.7}) {
    std::set<std::vector<TokenId>> ids;
    for (const auto& r : filter_threshold_global(pool, tau)) ids.insert(r.output.ids);
    chain.push_back(std::move(ids));
  }
  for (size_t i = 1; i < chain.size(); ++i)
    for (const auto& ids : chain[i]) CHECK(chain[i - 1].count(ids));
}

TEST_CASE("percentile filter: nearest-rank per problem") {
  std::vector<SampleRecord> records = {
      scalar_record("p", {1}, 1.0 / 10), scalar_record("p", {2}, 2.0 / 10),
      scalar_record("p", {3}, 3.0 / 10), scalar_record("p", {4}, 4.0 / 10)};
  // rank = ceil(0.75 * 4) = 3 -> threshold is the 3rd smallest
  auto out = filter_percentile(records, 75.0);
  CHECK(testing::scalar_rewards_of(out) == std::vector<double>{0.3, 0.4});

  auto maxima = filter_percentile(records, 100.0);
  CHECK(testing::scalar_rewards_of(maxima) == std::vector<double>{0.4});

  std::vector<SampleRecord> single = {scalar_record("q", {7}, 0.05)};
  CHECK(filter_percentile(single, 1.0).size() == 1);
  CHECK(filter_percentile(single, 100.0).size() == 1);
}

TEST_CASE("percentile filter: ties at the maximum all survive p=100") {
  std::vector<SampleRecord> records = {scalar_record("p", {1}, 0.9),
                                       scalar_record("p", {2}, 0.9),
                                       scalar_record("p", {3}, 0.1)};
  auto out = filter_percentile(records, 100.0);
  CHECK(out.size() == 2);
}

TEST_CASE("interpolated filter: gamma blends mean toward max") {
  std::vector<SampleRecord> records = {scalar_record("p", {1}, 0.2),
                                       scalar_record("p", {2}, 0.4),
                                       scalar_record("p", {3}, 1.0)};
  // max = 1.0, mean = 8/15; gamma=0.5 -> threshold ~ 0.7667: keeps only 1.0
  auto half = filter_interpolated(records, 0.5);
  CHECK(testing::scalar_rewards_of(half) == std::vector<double>{1.0});

  // gamma=0 thresholds at the mean
  auto mean_only = filter_interpolated(records, 0.0);
  CHECK(testing::scalar_rewards_of(mean_only) == std::vector<double>{1.0});
  std::vector<SampleRecord> spread = {scalar_record("p", {1}, 0.1),
                                      scalar_record("p", {2}, 0.5),
                                      scalar_record("p", {3}, 0.6)};
  auto above_mean = filter_interpolated(spread, 0.0);  // mean = 0.4
  CHECK(testing::scalar_rewards_of(above_mean) == std::vector<double>{0.5, 0.6});

  // gamma=1 thresholds at the max: strict inequality keeps nothing
  CHECK(filter_interpolated(records, 1.0).empty());
}

TEST_CASE("max selection: reward first, then log-prob, then lexicographic") {
  std::vector<SampleRecord> records = {record("p", {5}, 0, -5.0),
                                       record("p", {9}, 1, -2.0),
                                       record("p", {1}, 1, -3.0)};
  auto out = select_raft_max(records);
  REQUIRE(out.size() == 1);
  CHECK(out[0].output.ids == std::vector<TokenId>{9});
  CHECK(out[0].logprob.value == -2.0);

  std::vector<SampleRecord> single = {record("q", {4}, 0, -1.0)};
  auto self = select_raft_max(single);
  REQUIRE(self.size() == 1);
  CHECK(self[0].output.ids == std::vector<TokenId>{4});

  std::vector<SampleRecord> tied = {record("p", {3, 1}, 1, -2.0),
                                    record("p", {2, 9}, 1, -2.0),
                                    record("p", {3, 0}, 1, -2.0)};
  auto lex = select_raft_max(tied);
  REQUIRE(lex.size() == 1);
  CHECK(lex[0].output.ids == std::vector<TokenId>{2, 9});
}

TEST_CASE("weights: indicator, identity and normalized exponential") {
  std::vector<SampleRecord> survivors = {record("p", {1}, 1), record("p", {2}, 1)};
  for (const auto& wr : attach_weights(survivors, FilterSpec::Weighting::Indicator))
    CHECK(wr.weight == 1.0);

  std::vector<SampleRecord> scalars = {scalar_record("p", {1}, 0.5),
                                       scalar_record("p", {2}, 1.0)};
  auto identity = attach_weights(scalars, FilterSpec::Weighting::Identity);
  CHECK(identity[0].weight == 0.5);
  CHECK(identity[1].weight == 1.0);

  std::vector<SampleRecord> binary = {record("p", {1}, 0), record("p", {2}, 1)};
  auto expw = attach_weights(binary, FilterSpec::Weighting::Exp);
  const double e = std::exp(1.0);
  CHECK(expw[0].weight == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
  CHECK(expw[1].weight == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));
  // per-problem normalization: weights sum to 1 within each problem
  CHECK(expw[0].weight + expw[1].weight == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weights: record count preserved, weights non-negative") {
  auto engine = rng::make_engine(31);
  std::vector<SampleRecord> records;
  for (int i = 0; i < 40; ++i)
    records.push_back(scalar_record("p" + std::to_string(i % 4), {i}, rng::unit(engine)));
  for (auto f : {FilterSpec::Weighting::Indicator, FilterSpec::Weighting::Identity,
                 FilterSpec::Weighting::Exp}) {
    auto out = attach_weights(records, f);
    CHECK(out.size() == records.size());
    for (const auto& wr : out) CHECK(wr.weight >= 0.0);
  }
}

TEST_CASE("filters only ever shrink their input") {
  auto engine = rng::make_engine(77);
  std::vector<SampleRecord> pool;
  for (int i = 0; i < 80; ++i) {
    auto r = scalar_record("p" + std::to_string(i % 7), {i}, rng::unit(engine));
    pool.push_back(r);
  }
  auto subset_of_pool = [&](const std::vector<SampleRecord>& out) {
    std::set<std::vector<TokenId>> inputs;
    for (const auto& r : pool) inputs.insert(r.output.ids);
    for (const auto& r : out)
      if (!inputs.count(r.output.ids)) return false;
    return out.size() <= pool.size();
  };
  CHECK(subset_of_pool(filter_threshold_global(pool, 0.5)));
  CHECK(subset_of_pool(filter_percentile(pool, 60.0)));
  CHECK(subset_of_pool(filter_interpolated(pool, 0.3)));
  CHECK(subset_of_pool(select_raft_max(pool)));

  auto capped = dedupe_and_cap(pool, small_config(80, 4), 1);
  std::map<std::string, int> counts;
  for (const auto& r : capped) counts[r.problem_id] += 1;
  for (const auto& [pid, c] : counts) CHECK(c <= 4);
}

TEST_CASE("mixing: endpoints return the pools verbatim") {
  std::vector<TrainExample> synth = {TrainExample{make_seq({0}), make_seq({1}), 0.5}};
  std::vector<TrainExample> refs = {TrainExample{make_seq({2}), make_seq({3}), 1.0},
                                    TrainExample{make_seq({4}), make_seq({5}), 1.0}};
  auto all_synth = mix_with_reference(synth, refs, 1.0, 100, 1);
  REQUIRE(all_synth.size() == 1);
  CHECK(all_synth[0].weight == 0.5);

  auto all_refs = mix_with_reference(synth, refs, 0.0, 100, 1);
  CHECK(all_refs.size() == 2);

  std::vector<TrainExample> empty;
  CHECK_THROWS_AS(mix_with_reference(empty, refs, 0.5, 10, 1), InvalidArgument);
  CHECK_THROWS_AS(mix_with_reference(synth, empty, 0.5, 10, 1), InvalidArgument);
}

TEST_CASE("mixing: interior lambda hits the synthetic fraction within 3 sigma") {
  std::vector<TrainExample> synth(3, TrainExample{make_seq({0}), make_seq({1}), 0.125});
  std::vector<TrainExample> refs(3, TrainExample{make_seq({2}), make_seq({3}), 1.0});
  const size_t size = 1000;
  auto mixed = mix_with_reference(synth, refs, 0.5, size, 99);
  REQUIRE(mixed.size() == size);
  size_t from_synth = 0;
  for (const auto& ex : mixed)
    if (ex.weight == 0.125) ++from_synth;
  const double sigma = std::sqrt(size * 0.25);  // ~15.8
  CHECK(std::abs(static_cast<double>(from_synth) - 500.0) <= 3.0 * sigma);
}

TEST_CASE("records round-trip through JSONL fields") {
  namespace fs = std::filesystem;
  auto r = record("p1", {1, 2, 3}, 1, -2.5);
  r.iteration = 3;
  r.source_policy = "cafebabe";
  auto j = record_to_json(r);
  CHECK(j["problem_id"] == "p1");
  CHECK(j["reward_binary"] == 1);
  CHECK(j["iteration"] == 3);
  CHECK(j["logprob"] == -2.5);
  CHECK(j["reward_scalar"].is_null());

  auto sentinel = record("p2", {0}, 0);
  sentinel.logprob = LogProb::zero_probability();
  CHECK(record_to_json(sentinel)["logprob"].is_null());
}
