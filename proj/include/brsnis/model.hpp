#pragma once

#include <brsnis/random.hpp>

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>

namespace brsnis {

using Point = Eigen::VectorXd;
using PointView = Eigen::Ref<const Eigen::VectorXd>;
/// A batch of points, one point per column.
using PointMatrix = Eigen::MatrixXd;

using PointFunction = std::function<double(const PointView&)>;
using PointSampler = std::function<PointMatrix(Rng&, std::size_t)>;

/// Target/proposal pair. The target is only known through
/// pi(dx) proportional to exp(log_weight(x)) lambda(dx) where lambda is the proposal.
struct ModelSpec {
  std::size_t dim = 0;
  /// log of the unnormalized importance weight w(x); an additive constant is irrelevant.
  PointFunction log_weight;
  /// i.i.d. proposal draws.
  PointSampler propose;
  /// Exact target draws; empty when the target cannot be sampled directly.
  PointSampler target_sample;

  [[nodiscard]] bool has_target_sampler() const { return static_cast<bool>(target_sample); }
};

struct TestFunction {
  PointFunction eval;
  /// Declared bound on |eval|; bounds are stated for sup_bound <= 1 and rescaled otherwise.
  double sup_bound = 1.0;
};

/// Evaluates `f` and throws std::domain_error if the declared sup bound is exceeded.
double evaluate_bounded(const TestFunction& f, const PointView& x);

/// Thrown when Newton's method fails to converge; carries the last iterate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
      : std::runtime_error(what), last_iterate_(std::move(last_iterate)) {}
  [[nodiscard]] const Eigen::VectorXd& last_iterate() const { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

/// Thrown when the weight function appears unbounded (sup w / lambda(w) = infinity).
class UnboundedWeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Gaussian mixture target with a multivariate Student proposal.

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  [[nodiscard]] bool contains(const PointView& x) const;
};

struct MixtureSpec {
  std::array<Eigen::VectorXd, 2> means;
  /// Per-coordinate variance of both components (covariance = scale * I).
  double covariance_scale = 1.0;
  /// Weight of the first component.
  double weight = 0.5;
  double student_dof = 3.0;
  Box set_a;
  Box set_b;
  /// Student location; the mixture mean when unset.
  std::optional<Eigen::VectorXd> proposal_location;
  /// Student scale matrix is proposal_scale^2 * I.
  double proposal_scale = 1.0;

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(means[0].size()); }
  /// Throws std::invalid_argument when an invariant fails.
  void validate() const;
  [[nodiscard]] Eigen::VectorXd student_location() const;
};

/// Two-component mixture: means (1,...,1) and (-2,0,...,0), covariance I/dim,
/// weight 1/3 on the first component, Student nu = 3 proposal, and the
/// rectangles A = [-2,6] x [-1,1]^(dim-1), B = [0.75,1.25] x [1,2] x [-0.1,0.1]^(dim-2).
MixtureSpec reference_mixture(std::size_t dim);

ModelSpec make_gaussian_mixture(const MixtureSpec& spec);

/// f = 1_A - 1_B with sup bound 1.
TestFunction rectangle_difference(const MixtureSpec& spec);

/// Mixture probability of an axis-aligned box (product of Gaussian CDF differences).
double mixture_box_probability(const MixtureSpec& spec, const Box& box);

/// pi(1_A - 1_B).
double rectangle_difference_expectation(const MixtureSpec& spec);

double mixture_log_density(const MixtureSpec& spec, const PointView& x);
double student_log_density(const PointView& x, const Eigen::VectorXd& location, double scale,
                           double dof);

// ---------------------------------------------------------------------------
// Bayesian logistic regression posterior with a Laplace proposal.

struct LogisticPosteriorSpec {
  /// T x d; T may be zero (prior only).
  Eigen::MatrixXd covariates;
  /// T values in {-1, +1}.
  Eigen::VectorXd responses;
  /// Prior N(0, prior_precision^{-1} I).
  double prior_precision = 1.0;

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(covariates.cols()); }
  void validate() const;
};

struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  [[nodiscard]] double log_density(const PointView& x) const;
  [[nodiscard]] PointMatrix sample(Rng& rng, std::size_t count) const;
};

double log_sigmoid(double t);
/// p(y = 1 | x, theta).
double logistic_probability(const PointView& theta, const PointView& x);

/// Unnormalized log posterior: log-likelihood + log prior density.
double log_posterior(const LogisticPosteriorSpec& spec, const PointView& theta);
Eigen::VectorXd log_posterior_gradient(const LogisticPosteriorSpec& spec, const PointView& theta);

/// Newton mode (gradient norm <= 1e-8 within 100 iterations) and the
/// elementwise inverse of the negative Hessian diagonal at the mode.
DiagonalGaussian laplace_proposal(const LogisticPosteriorSpec& spec);

ModelSpec make_logistic_posterior(const LogisticPosteriorSpec& spec);
ModelSpec make_logistic_posterior(const LogisticPosteriorSpec& spec, const DiagonalGaussian& proposal);

struct SyntheticLogisticData {
  LogisticPosteriorSpec train;
  Eigen::MatrixXd test_covariates;
  Eigen::VectorXd test_responses;
};

/// Covariates i.i.d. standard normal; responses drawn from the logistic model at theta_star.
SyntheticLogisticData synthetic_logistic_data(const Eigen::VectorXd& theta_star,
                                              std::size_t observations, std::size_t test_points,
                                              double prior_precision, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Weight constants.

/// lambda(w^2) / lambda(w)^2 computed from the empirical weights, in log space.
double kappa_from_log_weights(std::span<const double> log_weights);

/// Monte Carlo estimate of kappa[pi, lambda] from `draws` proposal samples.
double estimate_kappa(const ModelSpec& model, std::size_t draws, Rng& rng);

/// Plug-in estimate of omega = sup w / lambda(w). The supremum comes from
/// Nelder-Mead started at `restarts` proposal draws, the normalizer from
/// `draws` proposal samples. Throws UnboundedWeightError when the
/// optimizer runs away.
double estimate_omega(const ModelSpec& model, std::size_t restarts, std::size_t draws, Rng& rng);

/// Maximizes log_weight from `start` with Nelder-Mead; returns the best value found.
double maximize_log_weight(const ModelSpec& model, const Point& start);

// ---------------------------------------------------------------------------

/// Wraps a model and counts log_weight evaluations and proposal draws.
/// Counters are shared between copies of the wrapped spec.
class CountingModel {
 public:
  explicit CountingModel(ModelSpec inner);

  [[nodiscard]] const ModelSpec& spec() const { return wrapped_; }
  [[nodiscard]] std::size_t weight_evaluations() const { return counters_->weights.load(); }
  [[nodiscard]] std::size_t proposal_draws() const { return counters_->draws.load(); }
  void reset();

 private:
  struct Counters {
    std::atomic<std::size_t> weights{0};
    std::atomic<std::size_t> draws{0};
  };
  std::shared_ptr<Counters> counters_;
  ModelSpec wrapped_;
};

}  // namespace brsnis
