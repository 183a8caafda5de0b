#include <brsnis/bounds.hpp>

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace brsnis;

TEST_CASE("mixing rate") {
  CHECK(mixing_rate(1.0, 2) == 0.5);
  CHECK(mixing_rate(1.0, 1000) == doctest::Approx(1.0 / 1000.0));
  CHECK(mixing_rate(1e4, 129) == doctest::Approx((2e4 - 1.0) / (2e4 + 127.0)).epsilon(1e-15));
  CHECK_THROWS_AS(mixing_rate(0.5, 4), std::invalid_argument);
  CHECK_THROWS_AS(mixing_rate(2.0, 1), std::invalid_argument);
}

TEST_CASE("mixing time") {
  CHECK(mixing_time(0.25) == 1);
  CHECK(mixing_time(0.5) == 2);
  CHECK(mixing_time(0.99) == 138);
  CHECK(mixing_time(0.01) == 1);
  CHECK(mixing_time(std::pow(0.25, 1.0 / 3.0)) == 3);
  CHECK_THROWS_AS(mixing_time(1.0), std::invalid_argument);
}

TEST_CASE("constants for omega = kappa = 1 and N = 2") {
  const BoundConstants c = BoundConstants::compute(1.0, 1.0, 2);
  CHECK(c.mixing_rate == 0.5);
  CHECK(c.mixing_time == 2);
  CHECK(c.bias == 12.0);
  CHECK(c.mse[0] == 4.0);
  CHECK(c.mse[1] == 20.0);
  CHECK(c.mse[2] == 16.0);
  CHECK(c.covariance[0] == doctest::Approx(24.0));
  CHECK(c.covariance[1] == doctest::Approx(12.0 * std::sqrt(20.0)));
  CHECK(c.covariance[2] == doctest::Approx(48.0));
  CHECK(c.rolling_bias == doctest::Approx(4.0 * 2.0 * 12.0 / 3.0));
  CHECK(c.rolling_mse[0] == doctest::Approx(20.0 + 16.0 / 3.0 * 24.0));
  CHECK(c.rolling_mse[1] == doctest::Approx(16.0 / 3.0 * 12.0 * std::sqrt(20.0)));
  CHECK(c.rolling_mse[2] == doctest::Approx(16.0 + 16.0 / 3.0 * 48.0));
  CHECK(c.rolling_mse_total == doctest::Approx(c.rolling_mse[0] + c.rolling_mse[1] + c.rolling_mse[2]));
  CHECK(c.deviation == 664.0);
  CHECK(pool_bias_bound(c, 1) == doctest::Approx(12.0));
  CHECK(pool_mse_bound(c) == doctest::Approx(40.0));
}

TEST_CASE("constant invariants on a grid of inputs") {
  for (double omega : {1.0, 3.5, 1e4}) {
    for (double kappa : {1.0, 7.0, 700.0}) {
      for (std::size_t n : {2, 8, 129, 513}) {
        const BoundConstants c = BoundConstants::compute(omega, kappa, n);
        CHECK(c.mixing_rate > 0.0);
        CHECK(c.mixing_rate < 1.0);
        CHECK(c.mixing_time >= 1);
        for (std::size_t i = 0; i < 3; ++i) {
          CHECK(c.covariance[i] == doctest::Approx(c.bias * std::sqrt(c.mse[i])));
          CHECK(c.rolling_mse[i] > 0.0);
        }
        const double m1 = static_cast<double>(n - 1);
        CHECK(c.rolling_mse_total ==
              doctest::Approx(c.rolling_mse[0] + c.rolling_mse[1] * std::pow(m1, -0.25) + c.rolling_mse[2] / m1));
      }
    }
  }
  CHECK_THROWS_AS(BoundConstants::compute(1.0, 0.5, 4), std::invalid_argument);
}

TEST_CASE("pool bias bound") {
  const BoundConstants c = BoundConstants::compute(10.0, 3.0, 33);
  CHECK(pool_bias_bound(c, 1) == doctest::Approx(4.0 * (3.0 + 1.0 + 10.0) / 32.0));
  CHECK(pool_bias_bound(c, 5) == doctest::Approx(pool_bias_bound(c, 1) * std::pow(c.mixing_rate, 4)));
  CHECK_THROWS_AS(pool_bias_bound(c, 0), std::invalid_argument);
}

TEST_CASE("pool covariance bound decays with the lag") {
  const BoundConstants c = BoundConstants::compute(2.0, 1.5, 17);
  const double base = c.covariance[0] * std::pow(16.0, -1.5) + c.covariance[1] * std::pow(16.0, -1.25) +
                      c.covariance[2] * std::pow(16.0, -1.0);
  CHECK(pool_covariance_bound(c, 1) == doctest::Approx(base));
  CHECK(pool_covariance_bound(c, 3) == doctest::Approx(base * c.mixing_rate * c.mixing_rate));
}

TEST_CASE("rolling bounds") {
  const BoundConstants c = BoundConstants::compute(5.0, 2.0, 9);
  const double t = static_cast<double>(c.mixing_time);
  const double um = 8.0 * 20.0;
  CHECK(rolling_bias_bound(c, 0, 20) == doctest::Approx(c.rolling_bias / um));
  // Shifting k0 by T multiplies the exponential factor by 1/4; upsilon M shrinks accordingly.
  const std::size_t k0 = 2;
  const auto tt = static_cast<std::size_t>(t);
  const double ratio = rolling_bias_bound(c, k0 + tt, 20) / rolling_bias_bound(c, k0, 20);
  CHECK(ratio == doctest::Approx(0.25 * static_cast<double>(20 - k0) / static_cast<double>(20 - k0 - tt)));
  CHECK(rolling_mse_bound(c, 0, 20) == doctest::Approx(8.0 / um + c.rolling_mse_total / um / std::sqrt(8.0)));
  CHECK(rolling_deviation_bound(c, 0.1, 0, 20) == doctest::Approx(664.0 * 5.0 / std::sqrt(um) * std::sqrt(std::log(40.0))));
  CHECK(rolling_mse_bound(c, 19, 20) == doctest::Approx(8.0 / 8.0 + c.rolling_mse_total / 8.0 / std::sqrt(8.0)));
  CHECK_THROWS_AS(rolling_bias_bound(c, 20, 20), std::invalid_argument);
  CHECK_THROWS_AS(rolling_deviation_bound(c, 1.0, 0, 20), std::invalid_argument);
}
