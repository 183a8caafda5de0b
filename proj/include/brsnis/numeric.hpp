#pragma once

#include <span>
#include <stdexcept>
#include <string>

namespace brsnis {

/// Thrown when every log-weight is -inf (no sample carries mass).
class DegenerateWeightsError : public std::runtime_error {
 public:
  DegenerateWeightsError() : std::runtime_error("degenerate weights") {}
};

/// Pairwise (tree) summation; error grows as O(log n) instead of O(n).
double pairwise_sum(std::span<const double> values);

/// Pairwise summation of the elementwise products a[i] * b[i].
double pairwise_dot(std::span<const double> a, std::span<const double> b);

/// log(sum(exp(values))) with max shifting. Returns -inf when all entries are -inf.
/// Throws std::domain_error on NaN or +inf entries.
double log_sum_exp(std::span<const double> values);

/// Mean and standard error of the mean (sample standard deviation / sqrt(n)).
struct MeanAndError {
  double mean = 0.0;
  double standard_error = 0.0;
};
MeanAndError mean_and_error(std::span<const double> values);

}  // namespace brsnis
