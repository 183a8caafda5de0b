#include "brsnis/bounds.hpp"

#include <cmath>
#include <stdexcept>

namespace brsnis {

double mixing_rate(double omega, std::size_t pool_size) {
  if (!(omega >= 1.0)) throw std::invalid_argument("mixing_rate: omega must be at least 1");
  if (pool_size < 2) throw std::invalid_argument("mixing_rate: pool size must be at least 2");
  return (2.0 * omega - 1.0) / (2.0 * omega + static_cast<double>(pool_size) - 2.0);
}

std::size_t mixing_time(double rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw std::invalid_argument("mixing_time: rate must lie in (0, 1)");
  const double ratio = -std::log(4.0) / std::log(rate);
  const double nearest = std::round(ratio);
  const double steps = std::abs(ratio - nearest) <= 1e-12 * nearest ? nearest : std::ceil(ratio);
  return steps < 1.0 ? 1 : static_cast<std::size_t>(steps);
}

BoundConstants BoundConstants::compute(double omega, double kappa, std::size_t pool_size) {
  if (!(omega >= 1.0)) throw std::invalid_argument("bounds: omega must be at least 1");
  if (!(kappa >= 1.0)) throw std::invalid_argument("bounds: kappa must be at least 1");
  if (pool_size < 2) throw std::invalid_argument("bounds: pool size must be at least 2");

  BoundConstants c;
  c.omega = omega;
  c.kappa = kappa;
  c.pool_size = pool_size;
  c.mixing_rate = brsnis::mixing_rate(omega, pool_size);
  c.mixing_time = brsnis::mixing_time(c.mixing_rate);

  c.bias = 4.0 * (kappa + 1.0 + omega);
  const double tail = (1.0 + omega) * (1.0 + omega);
  c.mse = {4.0 * kappa, 4.0 * (kappa + tail), 4.0 * tail};
  for (std::size_t i = 0; i < 3; ++i) c.covariance[i] = c.bias * std::sqrt(c.mse[i]);

  const double t = static_cast<double>(c.mixing_time);
  c.rolling_bias = 4.0 * t * c.bias / 3.0;
  c.rolling_mse = {c.mse[1] + 8.0 / 3.0 * t * c.covariance[0],  //
                   8.0 / 3.0 * t * c.covariance[1],             //
                   c.mse[2] + 8.0 / 3.0 * t * c.covariance[2]};
  const double m1 = static_cast<double>(pool_size - 1);
  c.rolling_mse_total = c.rolling_mse[0] + c.rolling_mse[1] * std::pow(m1, -0.25) + c.rolling_mse[2] / m1;
  c.deviation = 664.0 * omega;
  return c;
}

double pool_bias_bound(const BoundConstants& c, std::size_t iteration) {
  if (iteration < 1) throw std::invalid_argument("pool_bias_bound: iteration must be at least 1");
  return c.bias / static_cast<double>(c.pool_size - 1) *
         std::pow(c.mixing_rate, static_cast<double>(iteration - 1));
}

double pool_mse_bound(const BoundConstants& c) {
  const double m1 = static_cast<double>(c.pool_size - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) acc += c.mse[i] * std::pow(m1, -1.0 - 0.5 * static_cast<double>(i));
  return acc;
}

double pool_covariance_bound(const BoundConstants& c, std::size_t lag) {
  if (lag < 1) throw std::invalid_argument("pool_covariance_bound: lag must be at least 1");
  const double m1 = static_cast<double>(c.pool_size - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    acc += c.covariance[i] * std::pow(m1, -(3.0 - 0.5 * static_cast<double>(i)) / 2.0);
  }
  return std::pow(c.mixing_rate, static_cast<double>(lag - 1)) * acc;
}

namespace {

double used_budget(const BoundConstants& c, std::size_t burn_in, std::size_t iterations) {
  if (iterations < 1 || burn_in >= iterations) {
    throw std::invalid_argument("rolling bounds: need 0 <= k0 < k");
  }
  return static_cast<double>(iterations - burn_in) * static_cast<double>(c.pool_size - 1);
}

}  // namespace

double rolling_bias_bound(const BoundConstants& c, std::size_t burn_in, std::size_t iterations) {
  const double used = used_budget(c, burn_in, iterations);
  return c.rolling_bias / used *
         std::pow(4.0, -static_cast<double>(burn_in) / static_cast<double>(c.mixing_time));
}

double rolling_mse_bound(const BoundConstants& c, std::size_t burn_in, std::size_t iterations) {
  const double used = used_budget(c, burn_in, iterations);
  return 4.0 * c.kappa / used +
         c.rolling_mse_total / used / std::sqrt(static_cast<double>(c.pool_size - 1));
}

double rolling_deviation_bound(const BoundConstants& c, double delta, std::size_t burn_in,
                               std::size_t iterations) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("rolling_deviation_bound: delta must lie in (0, 1)");
  const double used = used_budget(c, burn_in, iterations);
  return c.deviation / std::sqrt(used) * std::sqrt(std::log(4.0 / delta));
}

}  // namespace brsnis
