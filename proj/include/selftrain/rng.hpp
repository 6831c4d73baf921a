#pragma once

// Deterministic randomness. Everything downstream of a master seed is pinned:
// std::mt19937_64 is bit-exact across platforms, and all draws (unit doubles,
// bounded integers, shuffles, categorical samples) are hand-rolled because the
// std::*_distribution adapters are implementation-defined. Identical seeds
// must give byte-identical artifacts.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "selftrain/common.hpp"

namespace selftrain::rng {

using Engine = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// One master seed expands into independent per-phase streams; an optional
// index gives per-item streams within a phase (per problem, per iteration).
inline uint64_t derive_seed(uint64_t master, std::string_view phase,
                            uint64_t index = 0) {
  uint64_t h = fnv1a64(phase);
  return splitmix64(master ^ splitmix64(h + 0x9e3779b97f4a7c15ull * (index + 1)));
}

inline Engine make_engine(uint64_t seed) { return Engine(seed); }

// Uniform double in [0, 1) from the top 53 bits.
inline double unit(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n) via rejection.
inline size_t pick_index(Engine& g, size_t n) {
  if (n <= 1) return 0;
  const uint64_t limit = (~uint64_t{0} / n) * n;
  uint64_t r;
  do {
    r = g();
  } while (r >= limit);
  return static_cast<size_t>(r % n);
}

template <typename T>
void shuffle(std::vector<T>& v, Engine& g) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = pick_index(g, i);
    std::swap(v[i - 1], v[j]);
  }
}

// Draw an index from an (already normalized) probability vector by walking
// the CDF. Floating-point residue at the tail falls to the last index with
// positive mass.
inline size_t sample_categorical(const std::vector<double>& probs, Engine& g) {
  double u = unit(g);
  double acc = 0.0;
  size_t last_positive = 0;
  bool seen_positive = false;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      last_positive = i;
      seen_positive = true;
    }
    acc += probs[i];
    if (u < acc) return probs[i] > 0.0 ? i : last_positive;
  }
  if (!seen_positive) throw InvalidArgument("sample_categorical: all-zero distribution");
  return last_positive;
}

}  // namespace selftrain::rng
