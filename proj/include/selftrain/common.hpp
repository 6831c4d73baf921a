#pragma once

// Shared primitives: error taxonomy, 64-bit FNV-1a hashing, and a
// log-probability type that carries "exactly zero probability" as an
// explicit flag instead of a raw -inf double.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace selftrain {

class InvalidArgument : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class TrainingDiverged : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class LoadError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error("config error at " + field + ": " + message),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// ----------------------------------------------------------------------------
// Hashing
// ----------------------------------------------------------------------------

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

constexpr uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

constexpr uint64_t fnv1a64_u64(uint64_t v, uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= kFnvPrime;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// ----------------------------------------------------------------------------
// LogProb
// ----------------------------------------------------------------------------

// Log-probability with an explicit minus-infinity flag. Zero-probability
// events are common here (tabular rows with hard zeros, rewards of 0 inside
// a log) and keeping the flag separate keeps sums and comparisons
// well-defined without NaN surprises.
struct LogProb {
  double value = 0.0;  // meaningful only when !neg_inf
  bool neg_inf = false;

  static LogProb zero_probability() { return LogProb{0.0, true}; }
  static LogProb of(double v) { return LogProb{v, false}; }

  bool finite() const { return !neg_inf; }

  double as_double() const {
    return neg_inf ? -std::numeric_limits<double>::infinity() : value;
  }

  LogProb& operator+=(const LogProb& o) {
    neg_inf = neg_inf || o.neg_inf;
    if (!neg_inf) value += o.value;
    return *this;
  }

  friend LogProb operator+(LogProb a, const LogProb& b) {
    a += b;
    return a;
  }

  // Total order with -inf below every finite value.
  friend bool operator<(const LogProb& a, const LogProb& b) {
    if (a.neg_inf) return !b.neg_inf;
    if (b.neg_inf) return false;
    return a.value < b.value;
  }
};

}  // namespace selftrain
