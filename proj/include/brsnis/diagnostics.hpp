#pragma once

#include <brsnis/isir.hpp>
#include <brsnis/model.hpp>
#include <brsnis/random.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace brsnis {

/// Echo of the configuration that produced a set of estimates.
struct RunLabel {
  std::string estimator;
  std::size_t pool_size = 0;
  std::size_t iterations = 0;
  std::size_t burn_in = 0;
  std::size_t rounds = 0;
  std::uint64_t seed_base = 0;
};

struct ReplicationSummary {
  std::size_t batch_size = 0;
  std::vector<double> batch_bias;
  std::vector<double> batch_mse;
  /// mean(estimates) - truth and its standard error.
  double bias = 0.0;
  double bias_se = 0.0;
  /// mean((estimates - truth)^2) and its standard error.
  double mse = 0.0;
  double mse_se = 0.0;
  /// Mean over batches of |batch bias|.
  double mean_abs_batch_bias = 0.0;
  RunLabel label;
};

/// Per-batch bias and MSE against `truth`. `batch` must divide the number of estimates.
ReplicationSummary replication_stats(std::span<const double> estimates, double truth, std::size_t batch);

struct CrossMoment {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Mean over replications of (s[k-1] - truth)(s[k-1+lag] - truth), where
/// s is one replication's sequence of recycled estimates and k is 1-based.
CrossMoment lag_covariance(std::span<const std::vector<double>> sequences, double truth,
                           std::size_t iteration, std::size_t lag);

/// `count` uniformly distributed unit directions, one per column.
Eigen::MatrixXd random_directions(std::size_t dim, std::size_t count, Rng& rng);

/// Mean over the given directions of the order-2 Wasserstein distance between
/// the projected samples. Point sets hold one point per column; the larger set
/// is uniformly subsampled (without replacement) to the size of the smaller.
double sliced_wasserstein(const PointMatrix& a, const PointMatrix& b, const Eigen::MatrixXd& directions,
                          Rng& rng);

/// Directions are drawn from `rng` first, then any subsampling.
double sliced_wasserstein(const PointMatrix& a, const PointMatrix& b, std::size_t projections, Rng& rng);

/// Class-1 predictive probabilities of an estimate and a reference on the same test points.
struct PredictiveTable {
  std::vector<double> estimate;
  std::vector<double> reference;
  void validate() const;
};

/// T^{-1} sum_i (1/2) sum_j |p_hat(y=j|x_i) - p(y=j|x_i)| over the binary classes.
double tv_predictive(const PredictiveTable& table);

struct CoverageResult {
  double violation_fraction = 0.0;
  bool pass = false;
};

/// Fraction of |estimate - truth| > bound; passes when the fraction stays
/// below delta + 2 sqrt(delta (1 - delta) / count).
CoverageResult coverage_check(std::span<const double> estimates, double truth, double bound, double delta);

struct GeometricFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares fit of log(values[i]) = slope * k_i + intercept.
GeometricFit fit_geometric_rate(std::span<const double> ks, std::span<const double> values);
/// Same with k_i = i + 1.
GeometricFit fit_geometric_rate(std::span<const double> values);

/// Runs a cold-start chain (initial proposal draw) and a stationary chain
/// (initial target draw) on common random numbers and returns, for each
/// iteration, the difference of their recycled estimates. Its expectation is
/// the cold-start bias of the pool estimate because the stationary chain is
/// unbiased at every iteration; once the chains coalesce the difference is 0.
std::vector<double> coupled_bias_differences(const ModelSpec& model, const TestFunction& f,
                                             std::size_t pool_size, std::size_t iterations, Rng& rng);

}  // namespace brsnis
