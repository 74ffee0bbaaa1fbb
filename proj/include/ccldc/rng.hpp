#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ccldc {

/// Seeded random stream. Copyable; a copy replays the same future draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  /// Independent stream derived from (seed, stream) through std::seed_seq.
  Rng(std::uint64_t seed, std::uint64_t stream);

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  std::uint64_t next_u64();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic child seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ccldc
