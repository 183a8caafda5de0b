#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

namespace brsnis {

/// SplitMix64 output function applied to `state`, advancing it by the golden gamma.
std::uint64_t splitmix64(std::uint64_t& state);

/// Stateless SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t value);

/// Derives the seed of one replication stream.
///
/// The rule is
///   h0 = mix64(base_seed)
///   h1 = mix64(h0 ^ mix64(grid_index + 0x9E3779B97F4A7C15))
///   h2 = mix64(h1 ^ mix64(replication + 0xD1B54A32D192ED03))
/// and h2 is the returned seed. Streams for different (grid, replication)
/// pairs never need coordination, so replications can run in any order.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t grid_index,
                          std::uint64_t replication);

/// xoshiro256** generator seeded through SplitMix64.
///
/// All variate generators below are defined in terms of `operator()` so the
/// stream consumption is identical across platforms and standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_positive();
  /// Uniform integer in [0, n). floor(uniform() * n).
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal();
  /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 is boosted by one extra uniform.
  double gamma(double shape);
  double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }

 private:
  std::uint64_t s_[4];
};

}  // namespace brsnis
