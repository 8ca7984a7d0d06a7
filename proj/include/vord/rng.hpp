#pragma once

#include <cstdint>
#include <random>

namespace vord {

/// Seeded generator with explicit stream splitting. Children are derived from
/// the construction seed only, so `split(k)` does not depend on how many draws
/// the parent has already made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0,1).
  double uniform();
  double normal();
  double gamma(double shape);
  /// Beta(a, b) from two Gamma draws.
  double beta(double a, double b);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace vord
