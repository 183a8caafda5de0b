#include "brsnis/diagnostics.hpp"

#include "brsnis/numeric.hpp"
#include "brsnis/snis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace brsnis {

ReplicationSummary replication_stats(std::span<const double> estimates, double truth, std::size_t batch) {
  if (estimates.empty()) throw std::invalid_argument("replication_stats: empty input");
  if (batch == 0 || estimates.size() % batch != 0) {
    throw std::invalid_argument("replication_stats: batch size must divide the replication count");
  }
  ReplicationSummary out;
  out.batch_size = batch;
  std::vector<double> errors(estimates.size());
  std::vector<double> squared(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    errors[i] = estimates[i] - truth;
    squared[i] = errors[i] * errors[i];
  }
  const std::size_t batches = estimates.size() / batch;
  const auto b = static_cast<double>(batch);
  std::vector<double> abs_bias(batches);
  for (std::size_t j = 0; j < batches; ++j) {
    const std::span<const double> e(errors.data() + j * batch, batch);
    const std::span<const double> s(squared.data() + j * batch, batch);
    out.batch_bias.push_back(pairwise_sum(e) / b);
    out.batch_mse.push_back(pairwise_sum(s) / b);
    abs_bias[j] = std::abs(out.batch_bias.back());
  }
  const MeanAndError bias = mean_and_error(errors);
  const MeanAndError mse = mean_and_error(squared);
  out.bias = bias.mean;
  out.bias_se = bias.standard_error;
  out.mse = mse.mean;
  out.mse_se = mse.standard_error;
  out.mean_abs_batch_bias = pairwise_sum(abs_bias) / static_cast<double>(batches);
  return out;
}

CrossMoment lag_covariance(std::span<const std::vector<double>> sequences, double truth,
                           std::size_t iteration, std::size_t lag) {
  if (sequences.empty()) throw std::invalid_argument("lag_covariance: no sequences");
  if (lag < 1 || iteration < 1) throw std::out_of_range("lag_covariance: lag and iteration must be at least 1");
  std::vector<double> products(sequences.size());
  for (std::size_t r = 0; r < sequences.size(); ++r) {
    const auto& s = sequences[r];
    if (iteration - 1 + lag >= s.size()) throw std::out_of_range("lag_covariance: lag out of range");
    products[r] = (s[iteration - 1] - truth) * (s[iteration - 1 + lag] - truth);
  }
  const MeanAndError m = mean_and_error(products);
  return CrossMoment{m.mean, m.standard_error};
}

Eigen::MatrixXd random_directions(std::size_t dim, std::size_t count, Rng& rng) {
  if (dim == 0) throw std::invalid_argument("random_directions: dimension must be positive");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(count));
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < out.rows(); ++j) out(j, c) = rng.normal();
      norm = out.col(c).norm();
    } while (norm == 0.0);
    out.col(c) /= norm;
  }
  return out;
}

namespace {

PointMatrix subsample_columns(const PointMatrix& points, std::size_t count, Rng& rng) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.index(order.size() - i)]);
  }
  PointMatrix out(points.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) out.col(static_cast<Eigen::Index>(i)) = points.col(order[i]);
  return out;
}

}  // namespace

double sliced_wasserstein(const PointMatrix& a, const PointMatrix& b, const Eigen::MatrixXd& directions,
                          Rng& rng) {
  if (a.cols() == 0 || b.cols() == 0) throw std::invalid_argument("sliced_wasserstein: empty point set");
  if (a.rows() != b.rows() || directions.rows() != a.rows()) {
    throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  }
  if (directions.cols() == 0) throw std::invalid_argument("sliced_wasserstein: need at least one projection");
  const PointMatrix* left = &a;
  const PointMatrix* right = &b;
  PointMatrix reduced;
  if (a.cols() > b.cols()) {
    reduced = subsample_columns(a, static_cast<std::size_t>(b.cols()), rng);
    left = &reduced;
  } else if (b.cols() > a.cols()) {
    reduced = subsample_columns(b, static_cast<std::size_t>(a.cols()), rng);
    right = &reduced;
  }

  const auto n = static_cast<std::size_t>(left->cols());
  std::vector<double> pa(n), pb(n), sq(n), per_direction(static_cast<std::size_t>(directions.cols()));
  for (Eigen::Index p = 0; p < directions.cols(); ++p) {
    const Eigen::RowVectorXd u = directions.col(p).transpose();
    const Eigen::RowVectorXd ya = u * *left;
    const Eigen::RowVectorXd yb = u * *right;
    std::copy(ya.data(), ya.data() + n, pa.begin());
    std::copy(yb.data(), yb.data() + n, pb.begin());
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    for (std::size_t i = 0; i < n; ++i) sq[i] = (pa[i] - pb[i]) * (pa[i] - pb[i]);
    per_direction[static_cast<std::size_t>(p)] = std::sqrt(pairwise_sum(sq) / static_cast<double>(n));
  }
  return pairwise_sum(per_direction) / static_cast<double>(per_direction.size());
}

double sliced_wasserstein(const PointMatrix& a, const PointMatrix& b, std::size_t projections, Rng& rng) {
  if (a.rows() != b.rows()) throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  const Eigen::MatrixXd directions = random_directions(static_cast<std::size_t>(a.rows()), projections, rng);
  return sliced_wasserstein(a, b, directions, rng);
}

void PredictiveTable::validate() const {
  if (estimate.size() != reference.size() || estimate.empty()) {
    throw std::invalid_argument("predictive table: rows must be non-empty and aligned");
  }
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!std::all_of(estimate.begin(), estimate.end(), in_unit) ||
      !std::all_of(reference.begin(), reference.end(), in_unit)) {
    throw std::invalid_argument("predictive table: probabilities must lie in [0, 1]");
  }
}

double tv_predictive(const PredictiveTable& table) {
  table.validate();
  std::vector<double> rows(table.estimate.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double d1 = std::abs(table.estimate[i] - table.reference[i]);
    const double d0 = std::abs((1.0 - table.estimate[i]) - (1.0 - table.reference[i]));
    rows[i] = 0.5 * (d0 + d1);
  }
  return std::clamp(pairwise_sum(rows) / static_cast<double>(rows.size()), 0.0, 1.0);
}

CoverageResult coverage_check(std::span<const double> estimates, double truth, double bound, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("coverage_check: delta must lie in (0, 1)");
  if (estimates.empty()) throw std::invalid_argument("coverage_check: empty input");
  const auto violations = std::count_if(estimates.begin(), estimates.end(),
                                        [&](double e) { return std::abs(e - truth) > bound; });
  const auto n = static_cast<double>(estimates.size());
  CoverageResult out;
  out.violation_fraction = static_cast<double>(violations) / n;
  out.pass = out.violation_fraction <= delta + 2.0 * std::sqrt(delta * (1.0 - delta) / n);
  return out;
}

GeometricFit fit_geometric_rate(std::span<const double> ks, std::span<const double> values) {
  if (ks.size() != values.size()) throw std::invalid_argument("fit_geometric_rate: length mismatch");
  if (values.size() < 3) throw std::invalid_argument("fit_geometric_rate: need at least three values");
  if (std::any_of(values.begin(), values.end(), [](double v) { return !(v > 0.0); })) {
    throw std::domain_error("fit_geometric_rate: values must be positive");
  }
  const auto n = static_cast<double>(values.size());
  double mk = 0.0, my = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    mk += ks[i];
    my += std::log(values[i]);
  }
  mk /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double dk = ks[i] - mk;
    sxy += dk * (std::log(values[i]) - my);
    sxx += dk * dk;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_geometric_rate: abscissae must not all coincide");
  GeometricFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mk;
  return fit;
}

GeometricFit fit_geometric_rate(std::span<const double> values) {
  std::vector<double> ks(values.size());
  std::iota(ks.begin(), ks.end(), 1.0);
  return fit_geometric_rate(ks, values);
}

std::vector<double> coupled_bias_differences(const ModelSpec& model, const TestFunction& f,
                                             std::size_t pool_size, std::size_t iterations, Rng& rng) {
  if (!model.has_target_sampler()) {
    throw std::invalid_argument("coupled_bias_differences: model has no target sampler");
  }
  ChainState cold = make_state(model, f, model.propose(rng, 1).col(0));
  ChainState stationary = make_state(model, f, model.target_sample(rng, 1).col(0));
  std::vector<double> out;
  out.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    Rng shared = rng;
    StepResult a = isir_step(model, cold, f, pool_size, rng);
    StepResult b = isir_step(model, stationary, f, pool_size, shared);
    out.push_back(snis_estimate(a.pool.log_weights, a.pool.f_values) -
                  snis_estimate(b.pool.log_weights, b.pool.f_values));
    cold = std::move(a.state);
    stationary = std::move(b.state);
  }
  return out;
}

}  // namespace brsnis
