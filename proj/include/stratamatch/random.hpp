#pragma once

#include <cstdint>
#include <random>

namespace stratamatch {

// Portable random source: std::mt19937_64 is bit-exactly specified by the
// standard, and every derived draw below is computed by hand rather than via
// <random> distributions (whose algorithms are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Independent stream for a (seed, stream) pair, e.g. one per sampling cell.
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer on [0, n) by rejection, n >= 1.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace stratamatch
