#include "brsnis/estimator.hpp"

#include "brsnis/numeric.hpp"
#include "brsnis/snis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace brsnis {

void RollingConfig::validate() const {
  if (pool_size < 2) throw std::invalid_argument("rolling: pool size must be at least 2");
  if (iterations < 1) throw std::invalid_argument("rolling: need at least one iteration");
  if (burn_in >= iterations) throw std::invalid_argument("rolling: burn-in must be smaller than k");
}

RollingConfig RollingConfig::last_pool(std::size_t pool_size, std::size_t iterations) {
  if (iterations < 1) throw std::invalid_argument("rolling: need at least one iteration");
  return RollingConfig{pool_size, iterations, iterations - 1};
}

double rolling_estimate(std::span<const double> recycled_estimates, std::size_t burn_in) {
  if (burn_in >= recycled_estimates.size()) {
    throw std::out_of_range("rolling_estimate: burn-in must be smaller than the chain length");
  }
  const auto window = recycled_estimates.subspan(burn_in);
  return pairwise_sum(window) / static_cast<double>(window.size());
}

double rolling_estimate(const ChainTrace& trace, std::size_t burn_in) {
  return rolling_estimate(trace.recycled_estimates, burn_in);
}

double br_snis(const ModelSpec& model, const TestFunction& f, const RollingConfig& cfg, Rng& rng) {
  cfg.validate();
  ChainConfig chain;
  chain.pool_size = cfg.pool_size;
  chain.iterations = cfg.iterations;
  chain.initial = InitialState::proposal_draw;
  return rolling_estimate(run_chain(model, f, chain, rng), cfg.burn_in);
}

CachedSampleBank::CachedSampleBank(PointMatrix points, std::vector<double> log_weights,
                                   std::vector<double> f_values)
    : points_(std::move(points)), log_weights_(std::move(log_weights)), f_values_(std::move(f_values)) {
  if (log_weights_.size() < 2) throw std::invalid_argument("bank: need a reserved triple and at least one sample");
  if (f_values_.size() != log_weights_.size() ||
      (points_.cols() != 0 && static_cast<std::size_t>(points_.cols()) != log_weights_.size())) {
    throw std::invalid_argument("bank: points, log-weights and f-values differ in length");
  }
}

CachedSampleBank build_sample_bank(const ModelSpec& model, const TestFunction& f,
                                   std::size_t sample_count, Rng& rng) {
  if (sample_count < 1) throw std::invalid_argument("bank: need at least one sample");
  PointMatrix points = model.propose(rng, sample_count + 1);
  std::vector<double> lw(sample_count + 1);
  std::vector<double> fv(sample_count + 1);
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    lw[i] = model.log_weight(points.col(c));
    fv[i] = evaluate_bounded(f, points.col(c));
  }
  return CachedSampleBank(std::move(points), std::move(lw), std::move(fv));
}

namespace {

// Replays bootstrap rounds; `on_pool(indices, weights)` sees every pool in
// the averaging window, `on_round_end()` closes a round.
class BootstrapReplay {
 public:
  BootstrapReplay(const CachedSampleBank& bank, const RollingConfig& cfg)
      : bank_(bank), cfg_(cfg), order_(bank.sample_count()), pool_(cfg.pool_size), weights_(cfg.pool_size) {
    cfg_.validate();
    if (cfg_.budget() != bank_.sample_count()) {
      throw std::invalid_argument("bootstrap: bank size does not match (N - 1) k");
    }
    const auto lw = bank_.log_weights();
    top_ = -std::numeric_limits<double>::infinity();
    for (double l : lw) {
      if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
        throw std::domain_error("bootstrap: non-finite log-weight");
      }
      top_ = std::max(top_, l);
    }
    if (top_ == -std::numeric_limits<double>::infinity()) throw DegenerateWeightsError();
    shifted_.resize(lw.size());
    std::transform(lw.begin(), lw.end(), shifted_.begin(), [this](double l) { return std::exp(l - top_); });
  }

  template <class OnPool>
  void round(Rng& rng, OnPool&& on_pool) {
    std::iota(order_.begin(), order_.end(), std::size_t{1});
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[rng.index(i)]);
    }
    const std::size_t n = cfg_.pool_size;
    std::size_t state = 0;
    for (std::size_t it = 0; it < cfg_.iterations; ++it) {
      const std::size_t slot = rng.index(n);
      const std::size_t* segment = order_.data() + it * (n - 1);
      for (std::size_t i = 0, s = 0; i < n; ++i) pool_[i] = (i == slot) ? state : segment[s++];
      normalize_pool();
      const std::size_t chosen = categorical_index(weights_, rng.uniform_positive());
      if (it >= cfg_.burn_in) on_pool(std::span<const std::size_t>(pool_), std::span<const double>(weights_));
      state = pool_[chosen];
    }
  }

 private:
  void normalize_pool() {
    for (std::size_t i = 0; i < pool_.size(); ++i) weights_[i] = shifted_[pool_[i]];
    double total = pairwise_sum(weights_);
    if (!(total > 0.0) || !std::isfinite(total)) {
      // Every pool entry underflowed against the bank maximum; shift by the pool maximum instead.
      const auto lw = bank_.log_weights();
      double pool_top = -std::numeric_limits<double>::infinity();
      for (std::size_t idx : pool_) pool_top = std::max(pool_top, lw[idx]);
      if (pool_top == -std::numeric_limits<double>::infinity()) throw DegenerateWeightsError();
      for (std::size_t i = 0; i < pool_.size(); ++i) weights_[i] = std::exp(lw[pool_[i]] - pool_top);
      total = pairwise_sum(weights_);
    }
    for (double& w : weights_) w /= total;
  }

  const CachedSampleBank& bank_;
  RollingConfig cfg_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> pool_;
  std::vector<double> weights_;
  std::vector<double> shifted_;
  double top_ = 0.0;
};

}  // namespace

double bootstrap_br_snis(const CachedSampleBank& bank, const RollingConfig& cfg, std::size_t rounds, Rng& rng) {
  if (rounds < 1) throw std::invalid_argument("bootstrap: need at least one round");
  BootstrapReplay replay(bank, cfg);
  const auto f = bank.f_values();
  std::vector<double> window;
  window.reserve(cfg.iterations - cfg.burn_in);
  std::vector<double> f_pool(cfg.pool_size);
  std::vector<double> round_estimates;
  round_estimates.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    window.clear();
    replay.round(rng, [&](std::span<const std::size_t> pool, std::span<const double> weights) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        f_pool[i] = f[pool[i]];
        if (weights[i] > 0.0) {
          lo = std::min(lo, f_pool[i]);
          hi = std::max(hi, f_pool[i]);
        }
      }
      window.push_back(std::clamp(pairwise_dot(weights, f_pool), lo, hi));
    });
    round_estimates.push_back(pairwise_sum(window) / static_cast<double>(window.size()));
  }
  const double mean = pairwise_sum(round_estimates) / static_cast<double>(rounds);
  const auto [lo, hi] = std::minmax_element(round_estimates.begin(), round_estimates.end());
  return std::clamp(mean, *lo, *hi);
}

std::vector<double> bootstrap_br_snis_coefficients(const CachedSampleBank& bank, const RollingConfig& cfg,
                                                   std::size_t rounds, Rng& rng) {
  if (rounds < 1) throw std::invalid_argument("bootstrap: need at least one round");
  BootstrapReplay replay(bank, cfg);
  std::vector<double> coefficients(bank.log_weights().size(), 0.0);
  const double scale =
      1.0 / (static_cast<double>(cfg.iterations - cfg.burn_in) * static_cast<double>(rounds));
  for (std::size_t r = 0; r < rounds; ++r) {
    replay.round(rng, [&](std::span<const std::size_t> pool, std::span<const double> weights) {
      for (std::size_t i = 0; i < pool.size(); ++i) coefficients[pool[i]] += scale * weights[i];
    });
  }
  return coefficients;
}

}  // namespace brsnis
