#pragma once

#include <cstdint>
#include <random>

namespace bnnk {

/// Seedable, splittable pseudo-random generator.
///
/// Every stochastic routine in the library takes an explicit seed and builds
/// one of these. `split(i)` derives an independent child stream whose state
/// depends only on (seed, i), so work can be chunked by index and the result
/// stays bit-identical regardless of how chunks are scheduled.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const;

  double normal() { return normal_(engine_); }
  double normal(double variance);
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace bnnk
