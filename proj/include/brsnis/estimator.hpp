#pragma once

#include <brsnis/isir.hpp>
#include <brsnis/model.hpp>
#include <brsnis/random.hpp>

#include <cstddef>
#include <span>
#include <vector>

namespace brsnis {

/// Rolling-estimator schedule: k pools of size N, the first k0 discarded.
struct RollingConfig {
  std::size_t pool_size = 2;
  std::size_t iterations = 1;
  std::size_t burn_in = 0;

  /// Total fresh proposal samples M = (N - 1) k.
  [[nodiscard]] std::size_t budget() const { return (pool_size - 1) * iterations; }
  /// Fraction (k - k0) / k of pools entering the estimate.
  [[nodiscard]] double used_fraction() const {
    return static_cast<double>(iterations - burn_in) / static_cast<double>(iterations);
  }
  void validate() const;

  /// Schedule with burn-in k - 1, i.e. only the last pool of each chain is averaged.
  static RollingConfig last_pool(std::size_t pool_size, std::size_t iterations);
};

/// Mean of recycled_estimates[burn_in .. k-1] (iterations burn_in+1..k in 1-based terms).
double rolling_estimate(std::span<const double> recycled_estimates, std::size_t burn_in);
double rolling_estimate(const ChainTrace& trace, std::size_t burn_in);

/// Runs a cold-start chain (one initial proposal draw, then (N - 1) k draws)
/// and returns its rolling estimate.
double br_snis(const ModelSpec& model, const TestFunction& f, const RollingConfig& cfg, Rng& rng);

/// M i.i.d. proposal triples plus one reserved triple (column 0) that serves
/// as the initial state of every bootstrap round.
class CachedSampleBank {
 public:
  CachedSampleBank(PointMatrix points, std::vector<double> log_weights, std::vector<double> f_values);

  /// Number of samples available to the rounds (excludes the reserved triple).
  [[nodiscard]] std::size_t sample_count() const { return log_weights_.size() - 1; }
  [[nodiscard]] const PointMatrix& points() const { return points_; }
  [[nodiscard]] std::span<const double> log_weights() const { return log_weights_; }
  [[nodiscard]] std::span<const double> f_values() const { return f_values_; }

 private:
  PointMatrix points_;
  std::vector<double> log_weights_;
  std::vector<double> f_values_;
};

/// Draws M + 1 proposal points in one call and evaluates w and f on each.
CachedSampleBank build_sample_bank(const ModelSpec& model, const TestFunction& f,
                                   std::size_t sample_count, Rng& rng);

/// Bootstrapped BR-SNIS over a cached bank. Each round resets the sample
/// order to the identity, applies a Fisher-Yates shuffle, cuts it into k
/// segments of N - 1, and replays i-SIR selection on the cached weights
/// starting from the reserved triple. The per-round rolling estimates are
/// averaged. No weight or proposal evaluation happens here.
double bootstrap_br_snis(const CachedSampleBank& bank, const RollingConfig& cfg, std::size_t rounds, Rng& rng);

/// Same replay as bootstrap_br_snis (identical RNG consumption) but returns
/// the effective coefficient of every bank entry, so that the estimate of any
/// function g is sum_i c_i g(x_i). Coefficients are non-negative and sum to one.
std::vector<double> bootstrap_br_snis_coefficients(const CachedSampleBank& bank, const RollingConfig& cfg,
                                                   std::size_t rounds, Rng& rng);

}  // namespace brsnis
