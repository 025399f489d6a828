#pragma once

#include <array>
#include <cstdint>

namespace aps {

/// xoshiro256** seeded through splitmix64. Pure integer arithmetic, so a seed gives the
/// same raw stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; consumes exactly two uniforms, no cached spare.
  double normal();
  /// Normal(0, sigma) redrawn until it lies in [-clip, clip]. A zero sigma or clip still
  /// consumes one normal draw so the stream position does not depend on noise amplitudes.
  double truncated_normal(double sigma, double clip);

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace aps
