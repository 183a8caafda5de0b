#include "brsnis/snis.hpp"

#include "brsnis/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace brsnis {

std::vector<double> normalize_weights(std::span<const double> log_weights) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : log_weights) {
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
      throw std::domain_error("normalize_weights: non-finite log-weight");
    }
    top = std::max(top, l);
  }
  if (top == -std::numeric_limits<double>::infinity()) throw DegenerateWeightsError();

  std::vector<double> weights(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), weights.begin(),
                 [top](double l) { return std::exp(l - top); });
  const double total = pairwise_sum(weights);
  for (double& w : weights) w /= total;
  return weights;
}

double snis_estimate(std::span<const double> log_weights, std::span<const double> f_values) {
  if (log_weights.size() != f_values.size()) {
    throw std::invalid_argument("snis_estimate: log-weights and f-values differ in length");
  }
  if (log_weights.empty()) throw std::invalid_argument("snis_estimate: empty sample");
  const std::vector<double> weights = normalize_weights(log_weights);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) {
      lo = std::min(lo, f_values[i]);
      hi = std::max(hi, f_values[i]);
    }
  }
  return std::clamp(pairwise_dot(weights, f_values), lo, hi);
}

double snis_estimate(const WeightedSampleSet& set) { return snis_estimate(set.log_weights, set.f_values); }

namespace {

void check_sample_count(std::size_t sample_count) {
  if (sample_count == 0) throw std::invalid_argument("snis bounds: need at least one sample");
}

}  // namespace

double snis_bias_bound(double kappa, std::size_t sample_count) {
  check_sample_count(sample_count);
  return 12.0 * kappa / static_cast<double>(sample_count);
}

double snis_mse_bound(double kappa, std::size_t sample_count) {
  check_sample_count(sample_count);
  return 4.0 * kappa / static_cast<double>(sample_count);
}

double snis_deviation_bound(double omega, std::size_t sample_count, double delta) {
  check_sample_count(sample_count);
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("snis_deviation_bound: delta must lie in (0, 1)");
  return 12.0 * omega / std::sqrt(static_cast<double>(sample_count) * std::numbers::ln2) *
         std::sqrt(std::log(2.0 / delta));
}

}  // namespace brsnis
