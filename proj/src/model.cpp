#include "brsnis/model.hpp"

#include "brsnis/numeric.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace brsnis {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double top = std::max(a, b);
  return top + std::log1p(std::exp(-std::abs(a - b)));
}

double gaussian_log_density(const PointView& x, const Eigen::VectorXd& mean, double variance) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * variance) -
         0.5 * (x - mean).squaredNorm() / variance;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Probability that N(mean, variance I) lands in the box.
double gaussian_box_probability(const Eigen::VectorXd& mean, double variance, const Box& box) {
  const double sd = std::sqrt(variance);
  double p = 1.0;
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    p *= normal_cdf((box.upper[j] - mean[j]) / sd) - normal_cdf((box.lower[j] - mean[j]) / sd);
  }
  return p;
}

void validate_box(const Box& box, std::size_t dim, const char* name) {
  if (static_cast<std::size_t>(box.lower.size()) != dim ||
      static_cast<std::size_t>(box.upper.size()) != dim) {
    throw std::invalid_argument(std::string("mixture: rectangle ") + name + " has wrong dimension");
  }
  if (!((box.upper - box.lower).array() > 0.0).all()) {
    throw std::invalid_argument(std::string("mixture: rectangle ") + name +
                                " must have positive volume");
  }
}

PointMatrix sample_student(Rng& rng, std::size_t count, const Eigen::VectorXd& location,
                           double scale, double dof) {
  const auto dim = location.size();
  PointMatrix out(dim, static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c) {
    auto col = out.col(static_cast<Eigen::Index>(c));
    for (Eigen::Index j = 0; j < dim; ++j) col[j] = rng.normal();
    const double mixing = std::sqrt(rng.chi_square(dof) / dof);
    col = location + (scale / mixing) * col;
  }
  return out;
}

}  // namespace

double evaluate_bounded(const TestFunction& f, const PointView& x) {
  const double v = f.eval(x);
  if (!(std::abs(v) <= f.sup_bound)) {
    throw std::domain_error("test function exceeds its declared sup bound");
  }
  return v;
}

bool Box::contains(const PointView& x) const {
  return ((x.array() >= lower.array()) && (x.array() <= upper.array())).all();
}

void MixtureSpec::validate() const {
  const std::size_t d = dim();
  if (d == 0) throw std::invalid_argument("mixture: dimension must be positive");
  if (static_cast<std::size_t>(means[1].size()) != d) {
    throw std::invalid_argument("mixture: component means differ in dimension");
  }
  if (!(covariance_scale > 0.0)) throw std::invalid_argument("mixture: covariance scale must be positive");
  if (!(student_dof > 0.0)) throw std::invalid_argument("mixture: Student degrees of freedom must be positive");
  if (!(weight > 0.0 && weight < 1.0)) throw std::invalid_argument("mixture: weight must lie in (0, 1)");
  if (!(proposal_scale > 0.0)) throw std::invalid_argument("mixture: proposal scale must be positive");
  if (proposal_location && static_cast<std::size_t>(proposal_location->size()) != d) {
    throw std::invalid_argument("mixture: proposal location has wrong dimension");
  }
  validate_box(set_a, d, "A");
  validate_box(set_b, d, "B");
}

Eigen::VectorXd MixtureSpec::student_location() const {
  if (proposal_location) return *proposal_location;
  return weight * means[0] + (1.0 - weight) * means[1];
}

MixtureSpec reference_mixture(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("reference_mixture: dimension must be positive");
  const auto d = static_cast<Eigen::Index>(dim);
  MixtureSpec spec;
  spec.means[0] = Eigen::VectorXd::Ones(d);
  spec.means[1] = Eigen::VectorXd::Zero(d);
  spec.means[1][0] = -2.0;
  spec.covariance_scale = 1.0 / static_cast<double>(dim);
  spec.weight = 1.0 / 3.0;
  spec.student_dof = 3.0;

  spec.set_a.lower = Eigen::VectorXd::Constant(d, -1.0);
  spec.set_a.upper = Eigen::VectorXd::Constant(d, 1.0);
  spec.set_a.lower[0] = -2.0;
  spec.set_a.upper[0] = 6.0;

  spec.set_b.lower = Eigen::VectorXd::Constant(d, -0.1);
  spec.set_b.upper = Eigen::VectorXd::Constant(d, 0.1);
  spec.set_b.lower[0] = 0.75;
  spec.set_b.upper[0] = 1.25;
  if (d > 1) {
    spec.set_b.lower[1] = 1.0;
    spec.set_b.upper[1] = 2.0;
  }
  return spec;
}

double mixture_log_density(const MixtureSpec& spec, const PointView& x) {
  return log_add_exp(std::log(spec.weight) + gaussian_log_density(x, spec.means[0], spec.covariance_scale),
                     std::log1p(-spec.weight) +
                         gaussian_log_density(x, spec.means[1], spec.covariance_scale));
}

double student_log_density(const PointView& x, const Eigen::VectorXd& location, double scale,
                           double dof) {
  const double d = static_cast<double>(x.size());
  const double r2 = (x - location).squaredNorm() / (scale * scale);
  return std::lgamma(0.5 * (dof + d)) - std::lgamma(0.5 * dof) -
         0.5 * d * std::log(dof * std::numbers::pi) - d * std::log(scale) -
         0.5 * (dof + d) * std::log1p(r2 / dof);
}

ModelSpec make_gaussian_mixture(const MixtureSpec& spec) {
  spec.validate();
  const MixtureSpec s = spec;
  const Eigen::VectorXd location = s.student_location();

  ModelSpec model;
  model.dim = s.dim();
  model.log_weight = [s, location](const PointView& x) {
    return mixture_log_density(s, x) - student_log_density(x, location, s.proposal_scale, s.student_dof);
  };
  model.propose = [s, location](Rng& rng, std::size_t count) {
    return sample_student(rng, count, location, s.proposal_scale, s.student_dof);
  };
  model.target_sample = [s](Rng& rng, std::size_t count) {
    const auto dim = static_cast<Eigen::Index>(s.dim());
    const double sd = std::sqrt(s.covariance_scale);
    PointMatrix out(dim, static_cast<Eigen::Index>(count));
    for (std::size_t c = 0; c < count; ++c) {
      const auto& mean = rng.uniform() < s.weight ? s.means[0] : s.means[1];
      auto col = out.col(static_cast<Eigen::Index>(c));
      for (Eigen::Index j = 0; j < dim; ++j) col[j] = mean[j] + sd * rng.normal();
    }
    return out;
  };
  return model;
}

TestFunction rectangle_difference(const MixtureSpec& spec) {
  spec.validate();
  const Box a = spec.set_a;
  const Box b = spec.set_b;
  return TestFunction{[a, b](const PointView& x) {
                        return (a.contains(x) ? 1.0 : 0.0) - (b.contains(x) ? 1.0 : 0.0);
                      },
                      1.0};
}

double mixture_box_probability(const MixtureSpec& spec, const Box& box) {
  return spec.weight * gaussian_box_probability(spec.means[0], spec.covariance_scale, box) +
         (1.0 - spec.weight) * gaussian_box_probability(spec.means[1], spec.covariance_scale, box);
}

double rectangle_difference_expectation(const MixtureSpec& spec) {
  return mixture_box_probability(spec, spec.set_a) - mixture_box_probability(spec, spec.set_b);
}

// ---------------------------------------------------------------------------

void LogisticPosteriorSpec::validate() const {
  if (covariates.cols() == 0) throw std::invalid_argument("logistic: dimension must be positive");
  if (covariates.rows() != responses.size()) {
    throw std::invalid_argument("logistic: covariates and responses differ in length");
  }
  for (Eigen::Index i = 0; i < responses.size(); ++i) {
    if (responses[i] != 1.0 && responses[i] != -1.0) {
      throw std::invalid_argument("logistic: responses must be -1 or +1");
    }
  }
  if (!(prior_precision > 0.0)) throw std::invalid_argument("logistic: prior precision must be positive");
}

double DiagonalGaussian::log_density(const PointView& x) const {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    const double z = x[j] - mean[j];
    acc += -0.5 * std::log(2.0 * std::numbers::pi * variance[j]) - 0.5 * z * z / variance[j];
  }
  return acc;
}

PointMatrix DiagonalGaussian::sample(Rng& rng, std::size_t count) const {
  const auto dim = mean.size();
  const Eigen::VectorXd sd = variance.array().sqrt();
  PointMatrix out(dim, static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      out(j, static_cast<Eigen::Index>(c)) = mean[j] + sd[j] * rng.normal();
    }
  }
  return out;
}

double log_sigmoid(double t) {
  return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

double logistic_probability(const PointView& theta, const PointView& x) {
  return std::exp(log_sigmoid(x.dot(theta)));
}

double log_posterior(const LogisticPosteriorSpec& spec, const PointView& theta) {
  const Eigen::VectorXd margins = spec.covariates * theta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) acc += log_sigmoid(spec.responses[i] * margins[i]);
  const double d = static_cast<double>(theta.size());
  return acc + 0.5 * d * std::log(spec.prior_precision / (2.0 * std::numbers::pi)) -
         0.5 * spec.prior_precision * theta.squaredNorm();
}

Eigen::VectorXd log_posterior_gradient(const LogisticPosteriorSpec& spec, const PointView& theta) {
  const Eigen::VectorXd margins = spec.covariates * theta;
  Eigen::VectorXd residual(margins.size());
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double y = spec.responses[i];
    residual[i] = y * std::exp(log_sigmoid(-y * margins[i]));
  }
  return spec.covariates.transpose() * residual - spec.prior_precision * theta;
}

namespace {

Eigen::MatrixXd negative_hessian(const LogisticPosteriorSpec& spec, const Eigen::VectorXd& theta) {
  const auto d = theta.size();
  const Eigen::VectorXd margins = spec.covariates * theta;
  Eigen::VectorXd curvature(margins.size());
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    curvature[i] = std::exp(log_sigmoid(margins[i]) + log_sigmoid(-margins[i]));
  }
  Eigen::MatrixXd h = spec.covariates.transpose() * curvature.asDiagonal() * spec.covariates;
  h += spec.prior_precision * Eigen::MatrixXd::Identity(d, d);
  return h;
}

}  // namespace

DiagonalGaussian laplace_proposal(const LogisticPosteriorSpec& spec) {
  spec.validate();
  constexpr int kMaxIterations = 100;
  constexpr double kGradientTolerance = 1e-8;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim()));
  double value = log_posterior(spec, theta);
  Eigen::VectorXd grad = log_posterior_gradient(spec, theta);
  int iteration = 0;
  while (grad.norm() > kGradientTolerance) {
    if (iteration++ == kMaxIterations) {
      throw ConvergenceError("laplace_proposal: Newton did not converge in 100 iterations", theta);
    }
    const Eigen::VectorXd step = negative_hessian(spec, theta).ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd candidate = theta + step;
    double candidate_value = log_posterior(spec, candidate);
    for (int halving = 0; halving < 50 && candidate_value < value; ++halving) {
      scale *= 0.5;
      candidate = theta + scale * step;
      candidate_value = log_posterior(spec, candidate);
    }
    theta = candidate;
    value = candidate_value;
    grad = log_posterior_gradient(spec, theta);
  }

  DiagonalGaussian out;
  out.mean = theta;
  out.variance = negative_hessian(spec, theta).diagonal().cwiseInverse();
  return out;
}

ModelSpec make_logistic_posterior(const LogisticPosteriorSpec& spec) {
  return make_logistic_posterior(spec, laplace_proposal(spec));
}

ModelSpec make_logistic_posterior(const LogisticPosteriorSpec& spec, const DiagonalGaussian& proposal) {
  spec.validate();
  ModelSpec model;
  model.dim = spec.dim();
  model.log_weight = [spec, proposal](const PointView& theta) {
    return log_posterior(spec, theta) - proposal.log_density(theta);
  };
  model.propose = [proposal](Rng& rng, std::size_t count) { return proposal.sample(rng, count); };
  return model;
}

SyntheticLogisticData synthetic_logistic_data(const Eigen::VectorXd& theta_star,
                                              std::size_t observations, std::size_t test_points,
                                              double prior_precision, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = theta_star.size();
  auto draw = [&](std::size_t rows, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    x.resize(static_cast<Eigen::Index>(rows), d);
    y.resize(static_cast<Eigen::Index>(rows));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
      const double p1 = logistic_probability(theta_star, x.row(i).transpose());
      y[i] = rng.uniform() < p1 ? 1.0 : -1.0;
    }
  };
  SyntheticLogisticData data;
  data.train.prior_precision = prior_precision;
  draw(observations, data.train.covariates, data.train.responses);
  draw(test_points, data.test_covariates, data.test_responses);
  return data;
}

// ---------------------------------------------------------------------------

double kappa_from_log_weights(std::span<const double> log_weights) {
  if (log_weights.size() < 2) throw std::invalid_argument("kappa: need at least two weights");
  std::vector<double> doubled(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), doubled.begin(),
                 [](double l) { return 2.0 * l; });
  const double lse = log_sum_exp(log_weights);
  if (lse == kNegInf) throw DegenerateWeightsError();
  const double value =
      std::exp(log_sum_exp(doubled) - 2.0 * lse + std::log(static_cast<double>(log_weights.size())));
  // lambda(w^2) >= lambda(w)^2 by Cauchy-Schwarz; only rounding can push below 1.
  return std::max(1.0, value);
}

namespace {

std::vector<double> proposal_log_weights(const ModelSpec& model, std::size_t draws, Rng& rng) {
  constexpr std::size_t kChunk = 1 << 16;
  std::vector<double> out;
  out.reserve(draws);
  for (std::size_t done = 0; done < draws; done += kChunk) {
    const std::size_t n = std::min(kChunk, draws - done);
    const PointMatrix x = model.propose(rng, n);
    for (Eigen::Index c = 0; c < x.cols(); ++c) out.push_back(model.log_weight(x.col(c)));
  }
  return out;
}

struct NelderMeadContext {
  const ModelSpec* model = nullptr;
  bool diverged = false;
};

constexpr double kDivergenceRadius = 1e6;

double negative_log_weight(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<NelderMeadContext*>(params);
  Point x(static_cast<Eigen::Index>(v->size));
  for (std::size_t j = 0; j < v->size; ++j) x[static_cast<Eigen::Index>(j)] = gsl_vector_get(v, j);
  if (!x.allFinite() || x.norm() > kDivergenceRadius) {
    ctx->diverged = true;
    return std::numeric_limits<double>::max();
  }
  const double lw = ctx->model->log_weight(x);
  if (std::isnan(lw)) return std::numeric_limits<double>::max();
  if (lw == std::numeric_limits<double>::infinity()) {
    ctx->diverged = true;
    return std::numeric_limits<double>::lowest();
  }
  return lw == kNegInf ? std::numeric_limits<double>::max() : -lw;
}

}  // namespace

double maximize_log_weight(const ModelSpec& model, const Point& start) {
  const std::size_t dim = model.dim;
  NelderMeadContext ctx{&model, false};
  gsl_multimin_function fn{&negative_log_weight, dim, &ctx};

  gsl_vector* x = gsl_vector_alloc(dim);
  gsl_vector* step = gsl_vector_alloc(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    gsl_vector_set(x, j, start[static_cast<Eigen::Index>(j)]);
    gsl_vector_set(step, j, 0.5);
  }
  gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
  gsl_multimin_fminimizer_set(solver, &fn, x, step);

  constexpr int kMaxIterations = 20000;
  for (int it = 0; it < kMaxIterations && !ctx.diverged; ++it) {
    if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), 1e-10) == GSL_SUCCESS) break;
  }
  const double best = -gsl_multimin_fminimizer_minimum(solver);
  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(step);
  gsl_vector_free(x);
  if (ctx.diverged) {
    throw UnboundedWeightError("estimate_omega: optimizer diverged; the weight function looks unbounded");
  }
  return best;
}

double estimate_kappa(const ModelSpec& model, std::size_t draws, Rng& rng) {
  if (draws < 2) throw std::invalid_argument("estimate_kappa: need at least two draws");
  return kappa_from_log_weights(proposal_log_weights(model, draws, rng));
}

double estimate_omega(const ModelSpec& model, std::size_t restarts, std::size_t draws, Rng& rng) {
  if (restarts < 1) throw std::invalid_argument("estimate_omega: need at least one restart");
  if (draws < 1) throw std::invalid_argument("estimate_omega: need at least one draw");

  // Silence GSL's abort-on-error for the optimizer.
  gsl_error_handler_t* previous = gsl_set_error_handler_off();
  double best = kNegInf;
  const PointMatrix starts = model.propose(rng, restarts);
  try {
    for (Eigen::Index c = 0; c < starts.cols(); ++c) {
      best = std::max(best, maximize_log_weight(model, starts.col(c)));
    }
  } catch (...) {
    gsl_set_error_handler(previous);
    throw;
  }
  gsl_set_error_handler(previous);

  const std::vector<double> lw = proposal_log_weights(model, draws, rng);
  best = std::max(best, *std::max_element(lw.begin(), lw.end()));
  const double log_normalizer = log_sum_exp(lw) - std::log(static_cast<double>(draws));
  if (log_normalizer == kNegInf) throw DegenerateWeightsError();
  return std::max(1.0, std::exp(best - log_normalizer));
}

// ---------------------------------------------------------------------------

CountingModel::CountingModel(ModelSpec inner) : counters_(std::make_shared<Counters>()) {
  wrapped_.dim = inner.dim;
  auto counters = counters_;
  wrapped_.log_weight = [counters, f = inner.log_weight](const PointView& x) {
    counters->weights.fetch_add(1, std::memory_order_relaxed);
    return f(x);
  };
  wrapped_.propose = [counters, f = inner.propose](Rng& rng, std::size_t count) {
    counters->draws.fetch_add(count, std::memory_order_relaxed);
    return f(rng, count);
  };
  wrapped_.target_sample = inner.target_sample;
}

void CountingModel::reset() {
  counters_->weights.store(0);
  counters_->draws.store(0);
}

}  // namespace brsnis
