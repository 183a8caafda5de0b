#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace brsnis {

/// Log-weights and cached test-function values of M weighted samples.
struct WeightedSampleSet {
  std::vector<double> log_weights;
  std::vector<double> f_values;
};

/// Max-shifted exponentiation onto the simplex. Entries equal to -inf get
/// zero mass; throws DegenerateWeightsError if every entry is -inf.
std::vector<double> normalize_weights(std::span<const double> log_weights);

/// Self-normalized importance sampling estimate sum_i omega_i f_i.
/// The result is clamped to the range of f over positively weighted samples.
double snis_estimate(std::span<const double> log_weights, std::span<const double> f_values);
double snis_estimate(const WeightedSampleSet& set);

/// Closed-form SNIS bounds for |f| <= 1: bias 12 kappa / M, MSE 4 kappa / M.
double snis_bias_bound(double kappa, std::size_t sample_count);
double snis_mse_bound(double kappa, std::size_t sample_count);

/// Deviation bound holding with probability at least 1 - delta:
/// 12 omega (M ln 2)^{-1/2} ln(2 / delta)^{1/2}.
double snis_deviation_bound(double omega, std::size_t sample_count, double delta);

}  // namespace brsnis
