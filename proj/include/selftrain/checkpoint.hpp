#pragma once

// Versioned textual checkpoint format. Parameters are written as C hexfloats
// (%a), which round-trip doubles exactly, and the header carries the
// vocabulary hash so a checkpoint can never be evaluated against the wrong
// token table.
//
//   selftrain-checkpoint v1
//   kind neural|tabular
//   vocab_hash <16 hex chars>
//   vocab <size> <eos_id>
//   tokens <tok0> <tok1> ...
//   window <W>
//   ... kind-specific tensors ...
//   end

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "selftrain/io.hpp"
#include "selftrain/policy.hpp"

namespace selftrain::ckpt {

namespace detail {

inline std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline void write_values(std::ostringstream& out, std::span<const double> vals) {
  for (size_t i = 0; i < vals.size(); ++i) {
    if (i) out << ' ';
    out << hexfloat(vals[i]);
  }
  out << '\n';
}

class Reader {
 public:
  explicit Reader(const std::string& content) : in_(content) {}

  std::string line() {
    std::string l;
    if (!std::getline(in_, l)) throw LoadError("checkpoint truncated");
    return l;
  }

  std::vector<std::string> fields() {
    std::istringstream ls(line());
    std::vector<std::string> out;
    std::string f;
    while (ls >> f) out.push_back(f);
    return out;
  }

  std::vector<double> values(size_t expected) {
    auto fs = fields();
    if (fs.size() != expected) throw LoadError("checkpoint: wrong value count");
    std::vector<double> out(expected);
    for (size_t i = 0; i < expected; ++i) {
      char* end = nullptr;
      out[i] = std::strtod(fs[i].c_str(), &end);
      if (end == fs[i].c_str() || *end != '\0')
        throw LoadError("checkpoint: bad numeric value");
    }
    return out;
  }

 private:
  std::istringstream in_;
};

}  // namespace detail

inline std::string serialize(const AnyPolicy& policy) {
  std::ostringstream out;
  const Vocab& v = policy.vocab();
  out << "selftrain-checkpoint v1\n";
  out << "kind " << (policy.is_tabular() ? "tabular" : "neural") << '\n';
  out << "vocab_hash " << hex64(v.hash()) << '\n';
  out << "vocab " << v.size() << ' ' << v.eos_id << '\n';
  out << "tokens";
  for (const auto& t : v.tokens) out << ' ' << t;
  out << '\n';
  out << "window " << policy.window() << '\n';

  if (policy.is_tabular()) {
    const auto& table = policy.tabular().table();
    out << "contexts " << table.size() << '\n';
    for (const auto& [key, row] : table) {
      out << "ctx " << key.size();
      for (TokenId id : key) out << ' ' << id;
      out << '\n';
      detail::write_values(out, row);
    }
  } else {
    const auto& n = policy.neural();
    out << "dims " << n.embed_dim() << ' ' << n.hidden_dim() << '\n';
    auto tensor = [&out](const char* name, size_t rows, size_t cols,
                         std::span<const double> data) {
      out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
      for (size_t r = 0; r < rows; ++r)
        detail::write_values(out, data.subspan(r * cols, cols));
    };
    tensor("embed", n.embed().rows, n.embed().cols, n.embed().a);
    tensor("hidden_w", n.hidden_w().rows, n.hidden_w().cols, n.hidden_w().a);
    tensor("hidden_b", 1, n.hidden_b().size(), n.hidden_b());
    tensor("out_w", n.out_w().rows, n.out_w().cols, n.out_w().a);
    tensor("out_b", 1, n.out_b().size(), n.out_b());
  }
  out << "end\n";
  return out.str();
}

// Artifact id: hash of the serialized bytes.
inline std::string policy_id(const AnyPolicy& policy) {
  return hex64(fnv1a64(serialize(policy)));
}

inline AnyPolicy deserialize(const std::string& content) {
  detail::Reader r(content);
  if (r.line() != "selftrain-checkpoint v1")
    throw LoadError("checkpoint: bad magic or version");

  auto kind_f = r.fields();
  if (kind_f.size() != 2 || kind_f[0] != "kind") throw LoadError("checkpoint: bad kind line");
  const std::string kind = kind_f[1];
  if (kind != "tabular" && kind != "neural") throw LoadError("checkpoint: unknown kind");

  auto hash_f = r.fields();
  if (hash_f.size() != 2 || hash_f[0] != "vocab_hash")
    throw LoadError("checkpoint: bad vocab_hash line");

  auto vocab_f = r.fields();
  if (vocab_f.size() != 3 || vocab_f[0] != "vocab") throw LoadError("checkpoint: bad vocab line");
  const int size = std::atoi(vocab_f[1].c_str());
  const int eos = std::atoi(vocab_f[2].c_str());

  auto tok_f = r.fields();
  if (tok_f.empty() || tok_f[0] != "tokens" ||
      static_cast<int>(tok_f.size()) != size + 1)
    throw LoadError("checkpoint: bad tokens line");
  Vocab vocab;
  vocab.tokens.assign(tok_f.begin() + 1, tok_f.end());
  vocab.eos_id = static_cast<TokenId>(eos);
  vocab.validate();
  if (hex64(vocab.hash()) != hash_f[1])
    throw LoadError("checkpoint: vocab hash mismatch");

  auto win_f = r.fields();
  if (win_f.size() != 2 || win_f[0] != "window") throw LoadError("checkpoint: bad window line");
  const int window = std::atoi(win_f[1].c_str());

  if (kind == "tabular") {
    TabularPolicy p(vocab, window);
    auto n_f = r.fields();
    if (n_f.size() != 2 || n_f[0] != "contexts")
      throw LoadError("checkpoint: bad contexts line");
    const long count = std::atol(n_f[1].c_str());
    for (long i = 0; i < count; ++i) {
      auto ctx_f = r.fields();
      if (ctx_f.size() < 2 || ctx_f[0] != "ctx") throw LoadError("checkpoint: bad ctx line");
      const size_t klen = static_cast<size_t>(std::atol(ctx_f[1].c_str()));
      if (ctx_f.size() != klen + 2) throw LoadError("checkpoint: bad ctx key");
      TabularPolicy::Key key(klen);
      for (size_t j = 0; j < klen; ++j)
        key[j] = static_cast<TokenId>(std::atoi(ctx_f[j + 2].c_str()));
      p.set_row(std::move(key), r.values(static_cast<size_t>(size)));
    }
    if (r.line() != "end") throw LoadError("checkpoint: missing end marker");
    return AnyPolicy(std::move(p));
  }

  auto dims_f = r.fields();
  if (dims_f.size() != 3 || dims_f[0] != "dims") throw LoadError("checkpoint: bad dims line");
  const int embed_dim = std::atoi(dims_f[1].c_str());
  const int hidden_dim = std::atoi(dims_f[2].c_str());
  NeuralPolicy p(vocab, window, embed_dim, hidden_dim, /*init_seed=*/0);
  auto read_tensor = [&r](const char* name, size_t rows, size_t cols,
                          std::span<double> dst) {
    auto head = r.fields();
    if (head.size() != 4 || head[0] != "tensor" || head[1] != name ||
        static_cast<size_t>(std::atol(head[2].c_str())) != rows ||
        static_cast<size_t>(std::atol(head[3].c_str())) != cols)
      throw LoadError(std::string("checkpoint: bad tensor header for ") + name);
    for (size_t i = 0; i < rows; ++i) {
      auto vals = r.values(cols);
      std::copy(vals.begin(), vals.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
  };
  read_tensor("embed", p.embed().rows, p.embed().cols, p.embed().a);
  read_tensor("hidden_w", p.hidden_w().rows, p.hidden_w().cols, p.hidden_w().a);
  read_tensor("hidden_b", 1, p.hidden_b().size(), p.hidden_b());
  read_tensor("out_w", p.out_w().rows, p.out_w().cols, p.out_w().a);
  read_tensor("out_b", 1, p.out_b().size(), p.out_b());
  if (r.line() != "end") throw LoadError("checkpoint: missing end marker");
  return AnyPolicy(std::move(p));
}

// Returns the checkpoint id (hash of the bytes written).
inline std::string save(const AnyPolicy& policy, const std::filesystem::path& path) {
  std::string content = serialize(policy);
  io::atomic_write(path, content);
  return hex64(fnv1a64(content));
}

inline AnyPolicy load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

}  // namespace selftrain::ckpt
