#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace seqpred {

// Seeded random source. All distributions are derived from the raw
// mt19937_64 stream by hand so that a given seed produces the same
// draws on every platform and standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1), never exactly 0 or 1; safe under log()
  double open01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // standard Gumbel(0,1) via inverse transform
  double gumbel() { return -std::log(-std::log(open01())); }

  // index drawn proportionally to the given non-negative weights
  int weighted_index(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::runtime_error("weighted_index: weights must sum to a positive value");
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

private:
  std::mt19937_64 engine_;
};

} // namespace seqpred
