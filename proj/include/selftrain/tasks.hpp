#pragma once

// Synthetic generation tasks with programmatic verifiers. Three families:
//
//   reverse      "R s"            -> s reversed
//   mod-add      "M a , b , m"    -> (a + b) mod m in decimal
//   expr-target  "E o1,o2,o3 = t" -> an arithmetic expression over + * ( )
//                                    using each operand exactly once and
//                                    evaluating to t (many correct outputs)
//
// Every token is a single symbol (digits, operators, letters, separators),
// so vocabularies stay small enough for exhaustive-enumeration oracles.
// Verifiers are pure; malformed or unterminated outputs score 0, never error.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selftrain/io.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/types.hpp"

namespace selftrain::tasks {

using json = nlohmann::json;

enum class TaskKind { ExprTarget, Reverse, ModAdd };

inline std::string kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::ExprTarget: return "expr-target";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::ModAdd: return "mod-add";
  }
  throw InvalidArgument("unknown task kind");
}

inline TaskKind kind_from_name(const std::string& s) {
  if (s == "expr-target") return TaskKind::ExprTarget;
  if (s == "reverse") return TaskKind::Reverse;
  if (s == "mod-add") return TaskKind::ModAdd;
  throw InvalidArgument("unknown task kind: " + s);
}

// ----------------------------------------------------------------------------
// Vocabularies
// ----------------------------------------------------------------------------

// Shared vocabulary for all three families (so policies transfer across
// tasks): digits, operators, parens, letters, separators, task markers, eos.
inline Vocab full_vocab() {
  Vocab v;
  for (char c : std::string("0123456789"))
    v.tokens.push_back(std::string(1, c));
  for (char c : std::string("+*()abcd,=RME#"))
    v.tokens.push_back(std::string(1, c));
  v.eos_id = v.size() - 1;  // '#'
  v.validate();
  return v;
}

// Minimal vocabulary for exhaustively enumerable instances: a few letters
// plus eos, reverse task only (the kind is implicit, no marker token).
inline Vocab tiny_vocab(int letters = 3) {
  if (letters < 2 || letters > 3)
    throw InvalidArgument("tiny_vocab: letters must be 2 or 3");
  Vocab v;
  for (int i = 0; i < letters; ++i)
    v.tokens.push_back(std::string(1, static_cast<char>('a' + i)));
  v.tokens.push_back("#");
  v.eos_id = v.size() - 1;
  v.validate();
  return v;
}

// ----------------------------------------------------------------------------
// Domain types
// ----------------------------------------------------------------------------

struct AnswerKey {
  // expr-target
  std::vector<int> operands;
  long long target = 0;
  // reverse
  std::vector<TokenId> reversed_ids;
  // mod-add
  long long residue = 0;
};

struct Problem {
  std::string id;
  TokenSeq input;  // the context x; never contains eos
  TaskKind kind = TaskKind::Reverse;
  AnswerKey answer_key;
};

struct ReferenceSolution {
  std::string problem_id;
  TokenSeq output;  // terminated; verifies to 1 by construction
};

struct RewardValue {
  int binary = 0;                 // {0,1}
  std::optional<double> scalar;   // [0,1], present only in scalar-reward mode

  double scalar_or_binary() const {
    return scalar.has_value() ? *scalar : static_cast<double>(binary);
  }
};

struct TaskSpec {
  TaskKind kind = TaskKind::ExprTarget;
  int n_train = 0, n_val = 0, n_test = 0, n_warmup = 0;
  // reverse difficulty
  int len_min = 3, len_max = 6;
  // expr-target difficulty
  int operand_count = 3, operand_min = 1, operand_max = 9;
  // mod-add difficulty
  int mod_min = 3, mod_max = 20;
  bool tiny = false;       // use tiny_vocab (reverse only)
  int tiny_letters = 3;
  bool scalar_rewards = false;

  int total() const { return n_train + n_val + n_test + n_warmup; }

  void validate() const {
    if (total() < 3) throw InvalidArgument("task: need at least 3 problems");
    if (n_train < 0 || n_val < 0 || n_test < 0 || n_warmup < 0)
      throw InvalidArgument("task: negative split count");
    if (kind == TaskKind::Reverse && (len_min < 1 || len_max < len_min))
      throw InvalidArgument("task: bad reverse length range");
    if (kind == TaskKind::ExprTarget &&
        (operand_count < 2 || operand_count > 4 || operand_min < 1 ||
         operand_max > 9 || operand_max < operand_min))
      throw InvalidArgument("task: bad expr difficulty");
    if (kind == TaskKind::ModAdd && (mod_min < 2 || mod_max < mod_min || mod_max > 999))
      throw InvalidArgument("task: bad modulus range");
    if (tiny && kind != TaskKind::Reverse)
      throw InvalidArgument("task: tiny vocabulary supports reverse only");
  }
};

struct ProblemSet {
  Vocab vocab;
  std::vector<Problem> problems;
  std::vector<ReferenceSolution> references;  // parallel to problems
  std::vector<std::string> splits;            // parallel: train/val/test/warmup

  std::vector<size_t> split_indices(std::string_view split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < splits.size(); ++i)
      if (splits[i] == split) out.push_back(i);
    return out;
  }

  std::vector<Problem> split_problems(std::string_view split) const {
    std::vector<Problem> out;
    for (size_t i : split_indices(split)) out.push_back(problems[i]);
    return out;
  }

  const Problem* find(const std::string& id) const {
    for (const auto& p : problems)
      if (p.id == id) return &p;
    return nullptr;
  }

  const ReferenceSolution* find_reference(const std::string& id) const {
    for (const auto& r : references)
      if (r.problem_id == id) return &r;
    return nullptr;
  }

  // Reference solutions of a split as weight-1 training examples.
  std::vector<TrainExample> reference_examples(std::string_view split) const {
    std::vector<TrainExample> out;
    for (size_t i : split_indices(split))
      out.push_back(TrainExample{problems[i].input, references[i].output, 1.0});
    return out;
  }
};

// ----------------------------------------------------------------------------
// Digit helpers
// ----------------------------------------------------------------------------

namespace detail {

inline std::vector<TokenId> digit_ids(long long v, const Vocab& vocab, int pad = 0) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < pad) s.insert(s.begin(), '0');
  std::vector<TokenId> out;
  for (char c : s) {
    TokenId id = vocab.id_of(std::string(1, c));
    if (id < 0) throw InvalidArgument("digit token missing from vocab");
    out.push_back(id);
  }
  return out;
}

inline std::vector<TokenId> letter_ids(const Vocab& vocab) {
  std::vector<TokenId> out;
  for (char c = 'a'; c <= 'z'; ++c) {
    TokenId id = vocab.id_of(std::string(1, c));
    if (id >= 0) out.push_back(id);
  }
  return out;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Expression enumeration and parsing
// ----------------------------------------------------------------------------

namespace expr {

// Operator precedence classes for minimal-parenthesis printing.
enum Prec { kSum = 0, kProduct = 1, kAtom = 2 };

struct Candidate {
  long long value = 0;
  std::vector<TokenId> toks;
  int prec = kAtom;
};

// All distinct expressions (as token strings) using each operand exactly
// once, with + and * and minimal parentheses. Exponential in operand count;
// fine for the supported 2..4 operands.
inline std::vector<Candidate> enumerate_expressions(const std::vector<int>& operands,
                                                    const Vocab& vocab) {
  const size_t n = operands.size();
  const TokenId plus = vocab.id_of("+");
  const TokenId times = vocab.id_of("*");
  const TokenId lpar = vocab.id_of("(");
  const TokenId rpar = vocab.id_of(")");
  std::vector<std::map<std::vector<TokenId>, Candidate>> sets(size_t{1} << n);

  for (size_t i = 0; i < n; ++i) {
    Candidate c;
    c.value = operands[i];
    c.toks = detail::digit_ids(operands[i], vocab);
    c.prec = kAtom;
    sets[size_t{1} << i][c.toks] = c;
  }

  auto wrapped = [&](const Candidate& c, bool needs_parens) {
    if (!needs_parens) return c.toks;
    std::vector<TokenId> out;
    out.push_back(lpar);
    out.insert(out.end(), c.toks.begin(), c.toks.end());
    out.push_back(rpar);
    return out;
  };

  for (size_t mask = 1; mask < sets.size(); ++mask) {
    if ((mask & (mask - 1)) == 0) continue;  // single operand handled above
    for (size_t left = (mask - 1) & mask; left != 0; left = (left - 1) & mask) {
      const size_t right = mask ^ left;
      for (const auto& [lt, lc] : sets[left]) {
        for (const auto& [rt, rc] : sets[right]) {
          // sum node: children never need parentheses
          {
            Candidate c;
            c.value = lc.value + rc.value;
            c.prec = kSum;
            c.toks = lc.toks;
            c.toks.push_back(plus);
            c.toks.insert(c.toks.end(), rc.toks.begin(), rc.toks.end());
            sets[mask].emplace(c.toks, c);
          }
          // product node: sum children need parentheses
          {
            Candidate c;
            c.value = lc.value * rc.value;
            c.prec = kProduct;
            c.toks = wrapped(lc, lc.prec == kSum);
            c.toks.push_back(times);
            auto rw = wrapped(rc, rc.prec == kSum);
            c.toks.insert(c.toks.end(), rw.begin(), rw.end());
            sets[mask].emplace(c.toks, c);
          }
        }
      }
    }
  }

  std::vector<Candidate> out;
  for (const auto& [toks, c] : sets[sets.size() - 1]) out.push_back(c);
  return out;
}

// value -> shortest (then lexicographically smallest) expression hitting it.
inline std::map<long long, std::vector<TokenId>> achievable_values(
    const std::vector<int>& operands, const Vocab& vocab) {
  std::map<long long, std::vector<TokenId>> best;
  for (const auto& c : enumerate_expressions(operands, vocab)) {
    auto it = best.find(c.value);
    if (it == best.end() ||
        c.toks.size() < it->second.size() ||
        (c.toks.size() == it->second.size() && c.toks < it->second)) {
      best[c.value] = c.toks;
    }
  }
  return best;
}

struct ParseResult {
  long long value = 0;
  std::vector<int> digits_used;  // multiset of single-digit literals
};

// Recursive-descent parse of  E := T ('+' T)* ; T := F ('*' F)* ;
// F := digit | '(' E ')'.  Integer arithmetic, standard precedence,
// no division. Returns nullopt on any malformation.
inline std::optional<ParseResult> parse_expression(std::span<const TokenId> toks,
                                                   const Vocab& vocab) {
  const TokenId plus = vocab.id_of("+");
  const TokenId times = vocab.id_of("*");
  const TokenId lpar = vocab.id_of("(");
  const TokenId rpar = vocab.id_of(")");
  size_t pos = 0;
  ParseResult res;
  bool failed = false;

  auto is_digit = [&vocab](TokenId t) {
    const std::string& s = vocab.tokens[static_cast<size_t>(t)];
    return s.size() == 1 && s[0] >= '0' && s[0] <= '9';
  };

  std::function<std::optional<long long>()> parse_sum;
  std::function<std::optional<long long>()> parse_factor = [&]() -> std::optional<long long> {
    if (pos >= toks.size()) return std::nullopt;
    TokenId t = toks[pos];
    if (is_digit(t)) {
      ++pos;
      int d = vocab.tokens[static_cast<size_t>(t)][0] - '0';
      res.digits_used.push_back(d);
      return d;
    }
    if (t == lpar) {
      ++pos;
      auto inner = parse_sum();
      if (!inner || pos >= toks.size() || toks[pos] != rpar) return std::nullopt;
      ++pos;
      return inner;
    }
    return std::nullopt;
  };
  std::function<std::optional<long long>()> parse_product = [&]() -> std::optional<long long> {
    auto acc = parse_factor();
    if (!acc) return std::nullopt;
    while (pos < toks.size() && toks[pos] == times) {
      ++pos;
      auto rhs = parse_factor();
      if (!rhs) return std::nullopt;
      *acc *= *rhs;
    }
    return acc;
  };
  parse_sum = [&]() -> std::optional<long long> {
    auto acc = parse_product();
    if (!acc) return std::nullopt;
    while (pos < toks.size() && toks[pos] == plus) {
      ++pos;
      auto rhs = parse_product();
      if (!rhs) return std::nullopt;
      *acc += *rhs;
    }
    return acc;
  };

  auto value = parse_sum();
  if (!value || failed || pos != toks.size()) return std::nullopt;
  res.value = *value;
  return res;
}

}  // namespace expr

// ----------------------------------------------------------------------------
// Verification and scoring
// ----------------------------------------------------------------------------

// Binary reward: 1 iff the output parses per the task grammar and matches or
// evaluates to the answer key. Unterminated outputs are 0. Pure function.
inline int verify_binary(const Problem& problem, const TokenSeq& y, const Vocab& vocab) {
  if (!y.terminated) return 0;
  auto payload = y.payload();
  switch (problem.kind) {
    case TaskKind::Reverse: {
      const auto& want = problem.answer_key.reversed_ids;
      return payload.size() == want.size() &&
                     std::equal(payload.begin(), payload.end(), want.begin())
                 ? 1
                 : 0;
    }
    case TaskKind::ModAdd: {
      auto want = detail::digit_ids(problem.answer_key.residue, vocab);
      return payload.size() == want.size() &&
                     std::equal(payload.begin(), payload.end(), want.begin())
                 ? 1
                 : 0;
    }
    case TaskKind::ExprTarget: {
      if (payload.empty()) return 0;
      auto parsed = expr::parse_expression(payload, vocab);
      if (!parsed) return 0;
      if (parsed->value != problem.answer_key.target) return 0;
      std::vector<int> used = parsed->digits_used;
      std::vector<int> want = problem.answer_key.operands;
      std::sort(used.begin(), used.end());
      std::sort(want.begin(), want.end());
      return used == want ? 1 : 0;
    }
  }
  return 0;
}

// Scalar reward in [0,1]; equals 1 exactly when verify_binary is 1.
// reverse / mod-add: fraction of positions matching the canonical answer,
// over max(answer length, output length). expr-target has no graded notion
// of partial credit, so it falls back to the binary value.
inline double score_scalar(const Problem& problem, const TokenSeq& y, const Vocab& vocab) {
  if (!y.terminated) return 0.0;
  auto payload = y.payload();
  std::vector<TokenId> want;
  switch (problem.kind) {
    case TaskKind::Reverse:
      want = problem.answer_key.reversed_ids;
      break;
    case TaskKind::ModAdd:
      want = detail::digit_ids(problem.answer_key.residue, vocab);
      break;
    case TaskKind::ExprTarget:
      return static_cast<double>(verify_binary(problem, y, vocab));
  }
  const size_t denom = std::max(std::max(want.size(), payload.size()), size_t{1});
  size_t matches = 0;
  for (size_t i = 0; i < std::min(want.size(), payload.size()); ++i)
    if (payload[i] == want[i]) ++matches;
  return static_cast<double>(matches) / static_cast<double>(denom);
}

inline RewardValue annotate_reward(const Problem& problem, const TokenSeq& y,
                                   const Vocab& vocab, bool scalar_mode) {
  RewardValue r;
  r.binary = verify_binary(problem, y, vocab);
  if (scalar_mode) r.scalar = score_scalar(problem, y, vocab);
  return r;
}

// Answer segment for majority voting: the span after the last
// answer-separator token ('=') when the output contains one, otherwise the
// whole payload. Unterminated outputs are malformed (nullopt).
inline std::optional<std::vector<TokenId>> extract_answer(const TokenSeq& y,
                                                          const Vocab& vocab) {
  if (!y.terminated) return std::nullopt;
  auto payload = y.payload();
  const TokenId sep = vocab.id_of("=");
  size_t start = 0;
  if (sep >= 0) {
    for (size_t i = payload.size(); i-- > 0;) {
      if (payload[i] == sep) {
        start = i + 1;
        break;
      }
    }
  }
  return std::vector<TokenId>(payload.begin() + static_cast<std::ptrdiff_t>(start),
                              payload.end());
}

// An extracted answer is correct iff it verifies as a standalone output.
inline bool answer_correct(const Problem& problem, std::span<const TokenId> answer,
                           const Vocab& vocab) {
  TokenSeq y;
  y.ids.assign(answer.begin(), answer.end());
  y.ids.push_back(vocab.eos_id);
  y.terminated = true;
  return verify_binary(problem, y, vocab) == 1;
}

// ----------------------------------------------------------------------------
// Problem generation
// ----------------------------------------------------------------------------

// Deterministic given the seed. Inputs are unique across the whole set (so
// split leakage is impossible); requesting more unique problems than the
// difficulty admits raises GenerationError.
inline ProblemSet gen_problem_set(const TaskSpec& spec, uint64_t seed) {
  spec.validate();
  ProblemSet set;
  set.vocab = spec.tiny ? tiny_vocab(spec.tiny_letters) : full_vocab();
  const Vocab& vocab = set.vocab;
  auto engine = rng::make_engine(rng::derive_seed(seed, "problem-gen"));

  const TokenId comma = vocab.id_of(",");
  const TokenId equals = vocab.id_of("=");
  const auto letters = detail::letter_ids(vocab);

  std::set<std::vector<TokenId>> seen_inputs;
  int counter = 0;
  long long attempts = 0;
  const long long max_attempts = 1000LL * std::max(spec.total(), 1);

  auto next_problem = [&]() -> std::pair<Problem, ReferenceSolution> {
    while (true) {
      if (++attempts > max_attempts)
        throw GenerationError("task generation: difficulty admits too few unique problems");
      Problem p;
      ReferenceSolution ref;
      p.kind = spec.kind;
      switch (spec.kind) {
        case TaskKind::Reverse: {
          const int len = spec.len_min + static_cast<int>(rng::pick_index(
                                             engine, static_cast<size_t>(
                                                         spec.len_max - spec.len_min + 1)));
          std::vector<TokenId> s;
          for (int i = 0; i < len; ++i)
            s.push_back(letters[rng::pick_index(engine, letters.size())]);
          if (!spec.tiny) p.input.ids.push_back(vocab.id_of("R"));
          p.input.ids.insert(p.input.ids.end(), s.begin(), s.end());
          p.answer_key.reversed_ids.assign(s.rbegin(), s.rend());
          ref.output = make_terminated(p.answer_key.reversed_ids, vocab);
          break;
        }
        case TaskKind::ModAdd: {
          const long long m = spec.mod_min + static_cast<long long>(rng::pick_index(
                                                 engine, static_cast<size_t>(
                                                             spec.mod_max - spec.mod_min + 1)));
          const long long a = static_cast<long long>(rng::pick_index(engine, static_cast<size_t>(m)));
          const long long b = static_cast<long long>(rng::pick_index(engine, static_cast<size_t>(m)));
          p.input.ids.push_back(vocab.id_of("M"));
          auto append = [&](long long v) {
            auto ds = detail::digit_ids(v, vocab);
            p.input.ids.insert(p.input.ids.end(), ds.begin(), ds.end());
          };
          append(a);
          p.input.ids.push_back(comma);
          append(b);
          p.input.ids.push_back(comma);
          append(m);
          p.answer_key.residue = (a + b) % m;
          ref.output = make_terminated(detail::digit_ids(p.answer_key.residue, vocab), vocab);
          break;
        }
        case TaskKind::ExprTarget: {
          std::vector<int> ops(static_cast<size_t>(spec.operand_count));
          for (auto& o : ops)
            o = spec.operand_min + static_cast<int>(rng::pick_index(
                                       engine, static_cast<size_t>(
                                                   spec.operand_max - spec.operand_min + 1)));
          auto candidates = expr::enumerate_expressions(ops, vocab);
          // pick a target uniformly among achievable values
          std::set<long long> value_set;
          for (const auto& c : candidates) value_set.insert(c.value);
          std::vector<long long> values(value_set.begin(), value_set.end());
          const long long target = values[rng::pick_index(engine, values.size())];
          // reference: a uniform draw among the shortest solutions, standing
          // in for one arbitrary human-written answer per problem
          size_t best_len = SIZE_MAX;
          for (const auto& c : candidates)
            if (c.value == target) best_len = std::min(best_len, c.toks.size());
          std::vector<const expr::Candidate*> shortest;
          for (const auto& c : candidates)
            if (c.value == target && c.toks.size() == best_len) shortest.push_back(&c);
          const auto& chosen = *shortest[rng::pick_index(engine, shortest.size())];
          p.input.ids.push_back(vocab.id_of("E"));
          for (size_t i = 0; i < ops.size(); ++i) {
            if (i) p.input.ids.push_back(comma);
            auto ds = detail::digit_ids(ops[i], vocab);
            p.input.ids.insert(p.input.ids.end(), ds.begin(), ds.end());
          }
          p.input.ids.push_back(equals);
          // fixed-width target so input positions are stable for the policy
          auto ts = detail::digit_ids(target, vocab, /*pad=*/3);
          p.input.ids.insert(p.input.ids.end(), ts.begin(), ts.end());
          p.answer_key.operands = ops;
          p.answer_key.target = target;
          ref.output = make_terminated(chosen.toks, vocab);
          break;
        }
      }
      if (!seen_inputs.insert(p.input.ids).second) continue;  // duplicate input
      ++counter;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%04d", counter);
      p.id = kind_name(spec.kind).substr(0, 3) + "-" + buf;
      ref.problem_id = p.id;
      return {std::move(p), std::move(ref)};
    }
  };

  auto emit = [&](int count, const char* split) {
    for (int i = 0; i < count; ++i) {
      auto [p, ref] = next_problem();
      set.problems.push_back(std::move(p));
      set.references.push_back(std::move(ref));
      set.splits.emplace_back(split);
    }
  };
  emit(spec.n_train, "train");
  emit(spec.n_val, "val");
  emit(spec.n_test, "test");
  emit(spec.n_warmup, "warmup");
  return set;
}

// ----------------------------------------------------------------------------
// Persistence (JSONL + meta)
// ----------------------------------------------------------------------------

inline json problem_to_json(const ProblemSet& set, size_t i) {
  const Problem& p = set.problems[i];
  json key;
  switch (p.kind) {
    case TaskKind::Reverse:
      key = {{"reversed", p.answer_key.reversed_ids}};
      break;
    case TaskKind::ModAdd:
      key = {{"residue", p.answer_key.residue}};
      break;
    case TaskKind::ExprTarget:
      key = {{"operands", p.answer_key.operands}, {"target", p.answer_key.target}};
      break;
  }
  return json{{"id", p.id},
              {"kind", kind_name(p.kind)},
              {"input_tokens", p.input.ids},
              {"answer_key", key},
              {"reference_tokens", set.references[i].output.ids},
              {"split", set.splits[i]}};
}

inline void save_problem_set(const ProblemSet& set, const std::filesystem::path& dir) {
  std::vector<json> rows;
  for (size_t i = 0; i < set.problems.size(); ++i) rows.push_back(problem_to_json(set, i));
  io::atomic_write(dir / "problems.jsonl", io::to_jsonl(rows));
  json meta = {{"schema_version", 1},
               {"vocab", {{"tokens", set.vocab.tokens}, {"eos_id", set.vocab.eos_id}}},
               {"vocab_hash", hex64(set.vocab.hash())}};
  io::atomic_write(dir / "problems.meta.json", meta.dump(2) + "\n");
}

inline ProblemSet load_problem_set(const std::filesystem::path& dir) {
  ProblemSet set;
  json meta = json::parse(io::read_file(dir / "problems.meta.json"));
  set.vocab.tokens = meta.at("vocab").at("tokens").get<std::vector<std::string>>();
  set.vocab.eos_id = meta.at("vocab").at("eos_id").get<TokenId>();
  set.vocab.validate();
  if (hex64(set.vocab.hash()) != meta.at("vocab_hash").get<std::string>())
    throw LoadError("problem set: vocab hash mismatch");
  for (const auto& row : io::read_jsonl(dir / "problems.jsonl")) {
    Problem p;
    p.id = row.at("id").get<std::string>();
    p.kind = kind_from_name(row.at("kind").get<std::string>());
    p.input.ids = row.at("input_tokens").get<std::vector<TokenId>>();
    const json& key = row.at("answer_key");
    switch (p.kind) {
      case TaskKind::Reverse:
        p.answer_key.reversed_ids = key.at("reversed").get<std::vector<TokenId>>();
        break;
      case TaskKind::ModAdd:
        p.answer_key.residue = key.at("residue").get<long long>();
        break;
      case TaskKind::ExprTarget:
        p.answer_key.operands = key.at("operands").get<std::vector<int>>();
        p.answer_key.target = key.at("target").get<long long>();
        break;
    }
    ReferenceSolution ref;
    ref.problem_id = p.id;
    ref.output.ids = row.at("reference_tokens").get<std::vector<TokenId>>();
    ref.output.terminated = true;
    set.problems.push_back(std::move(p));
    set.references.push_back(std::move(ref));
    set.splits.push_back(row.at("split").get<std::string>());
  }
  return set;
}

}  // namespace selftrain::tasks
