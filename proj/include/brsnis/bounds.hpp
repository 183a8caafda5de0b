#pragma once

#include <array>
#include <cstddef>

namespace brsnis {

/// Uniform geometric mixing rate of the i-SIR kernel, (2 omega - 1) / (2 omega + N - 2).
double mixing_rate(double omega, std::size_t pool_size);

/// Mixing-time bound ceil(-ln 4 / ln rate). Ratios within 1e-12 of an integer
/// are rounded to it so exact powers of 1/4 are not pushed up by rounding.
std::size_t mixing_time(double rate);

/// Constants driving the pool and rolling-estimator bounds, all stated for |f| <= 1.
struct BoundConstants {
  double omega = 1.0;
  double kappa = 1.0;
  std::size_t pool_size = 2;

  double mixing_rate = 0.0;
  std::size_t mixing_time = 1;
  double bias = 0.0;                   // 4 (kappa + 1 + omega)
  std::array<double, 3> mse{};         // 4 (kappa 1{i<=1} + (1 + omega)^2 1{i>=1})
  std::array<double, 3> covariance{};  // bias * sqrt(mse_i)
  double rolling_bias = 0.0;           // 4 T bias / 3
  std::array<double, 3> rolling_mse{};
  double rolling_mse_total = 0.0;
  double deviation = 0.0;  // 664 omega

  /// Requires omega >= 1, kappa >= 1, N >= 2.
  static BoundConstants compute(double omega, double kappa, std::size_t pool_size);
};

/// |E[pool estimate at iteration k] - pi(f)| <= bias (N - 1)^{-1} rate^{k-1}.
double pool_bias_bound(const BoundConstants& c, std::size_t iteration);
/// Second moment of a pool estimate: sum_i mse_i (N - 1)^{-1 - i/2}.
double pool_mse_bound(const BoundConstants& c);
/// Cross moment at lag l: rate^{l-1} sum_i cov_i (N - 1)^{-(3 - i/2)/2}.
double pool_covariance_bound(const BoundConstants& c, std::size_t lag);

/// Rolling estimator, with upsilon M = (k - k0)(N - 1):
/// bias    rolling_bias (upsilon M)^{-1} 4^{-k0 / T}
/// MSE     4 kappa / (upsilon M) + rolling_mse_total (upsilon M)^{-1} (N - 1)^{-1/2}
/// deviation (prob. >= 1 - delta) 664 omega (upsilon M)^{-1/2} ln(4 / delta)^{1/2}
double rolling_bias_bound(const BoundConstants& c, std::size_t burn_in, std::size_t iterations);
double rolling_mse_bound(const BoundConstants& c, std::size_t burn_in, std::size_t iterations);
double rolling_deviation_bound(const BoundConstants& c, double delta, std::size_t burn_in,
                               std::size_t iterations);

}  // namespace brsnis
