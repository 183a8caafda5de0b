#pragma once

#include <brsnis/model.hpp>

#include <Eigen/Dense>

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace test_support {

// 1-D standard Gaussian target (both components at 0) with a Student t3
// proposal, and f = 1_[-1,1] - 1_[0.5,2].
inline brsnis::MixtureSpec gaussian_student_1d() {
  brsnis::MixtureSpec s;
  s.means[0] = Eigen::VectorXd::Zero(1);
  s.means[1] = Eigen::VectorXd::Zero(1);
  s.covariance_scale = 1.0;
  s.weight = 0.5;
  s.student_dof = 3.0;
  s.set_a = brsnis::Box{Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)};
  s.set_b = brsnis::Box{Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 2.0)};
  return s;
}

// Analytic sup of w = N(0,1) / t3 over a dense grid on [-10, 10]; both
// densities are normalized so lambda(w) = 1 and omega = sup w.
inline double grid_omega_1d(const brsnis::ModelSpec& model) {
  double best = -INFINITY;
  Eigen::VectorXd x(1);
  for (int i = 0; i <= 2'000'000; ++i) {
    x[0] = -10.0 + 20.0 * i / 2'000'000.0;
    best = std::max(best, model.log_weight(x));
  }
  return std::exp(best);
}

// Rectangle probability for an isotropic diagonal Gaussian mixture, computed
// directly from 1-D normal CDF differences.
inline double oracle_box_probability(const brsnis::MixtureSpec& s, const brsnis::Box& box) {
  const boost::math::normal_distribution<> nd(0.0, std::sqrt(s.covariance_scale));
  double total = 0.0;
  for (int c = 0; c < 2; ++c) {
    double p = 1.0;
    for (Eigen::Index j = 0; j < box.lower.size(); ++j) {
      p *= boost::math::cdf(nd, box.upper[j] - s.means[c][j]) - boost::math::cdf(nd, box.lower[j] - s.means[c][j]);
    }
    total += (c == 0 ? s.weight : 1.0 - s.weight) * p;
  }
  return total;
}

inline double oracle_rectangle_difference(const brsnis::MixtureSpec& s) {
  return oracle_box_probability(s, s.set_a) - oracle_box_probability(s, s.set_b);
}

}  // namespace test_support
