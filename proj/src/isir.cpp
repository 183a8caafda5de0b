#include "brsnis/isir.hpp"

#include "brsnis/numeric.hpp"
#include "brsnis/snis.hpp"

#include <cmath>
#include <stdexcept>

namespace brsnis {

ChainState make_state(const ModelSpec& model, const TestFunction& f, Point point) {
  ChainState s;
  s.log_weight = model.log_weight(point);
  s.f_value = evaluate_bounded(f, point);
  s.point = std::move(point);
  return s;
}

std::size_t categorical_index(std::span<const double> weights, double u) {
  if (weights.empty()) throw std::invalid_argument("categorical_index: empty weights");
  double cumulative = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    cumulative += weights[i];
    if (cumulative >= u && weights[i] > 0.0) return i;
  }
  if (last_positive == weights.size()) throw DegenerateWeightsError();
  return last_positive;
}

std::size_t categorical_draw(std::span<const double> weights, Rng& rng) {
  return categorical_index(weights, rng.uniform_positive());
}

StepResult isir_step(const ModelSpec& model, const ChainState& state, const TestFunction& f,
                     std::size_t pool_size, Rng& rng) {
  if (pool_size < 2) throw std::invalid_argument("isir_step: pool size must be at least 2");
  const std::size_t slot = rng.index(pool_size);
  const PointMatrix fresh = model.propose(rng, pool_size - 1);

  StepResult out;
  WeightedPool& pool = out.pool;
  pool.insertion_index = slot;
  pool.points.resize(static_cast<Eigen::Index>(model.dim), static_cast<Eigen::Index>(pool_size));
  pool.log_weights.resize(pool_size);
  pool.f_values.resize(pool_size);
  Eigen::Index next_fresh = 0;
  for (std::size_t i = 0; i < pool_size; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    if (i == slot) {
      pool.points.col(col) = state.point;
      pool.log_weights[i] = state.log_weight;
      pool.f_values[i] = state.f_value;
    } else {
      pool.points.col(col) = fresh.col(next_fresh++);
      pool.log_weights[i] = model.log_weight(pool.points.col(col));
      pool.f_values[i] = evaluate_bounded(f, pool.points.col(col));
    }
  }

  const std::vector<double> weights = normalize_weights(pool.log_weights);
  const std::size_t chosen = categorical_draw(weights, rng);
  out.state.point = pool.points.col(static_cast<Eigen::Index>(chosen));
  out.state.log_weight = pool.log_weights[chosen];
  out.state.f_value = pool.f_values[chosen];
  return out;
}

void ChainConfig::validate(const ModelSpec& model) const {
  if (pool_size < 2) throw std::invalid_argument("chain: pool size must be at least 2");
  if (iterations < 1) throw std::invalid_argument("chain: need at least one iteration");
  if (initial == InitialState::target_draw && !model.has_target_sampler()) {
    throw std::invalid_argument("chain: target-draw start requires a target sampler");
  }
  if (initial == InitialState::explicit_point &&
      (!initial_point || static_cast<std::size_t>(initial_point->size()) != model.dim)) {
    throw std::invalid_argument("chain: explicit start requires a point of the model dimension");
  }
}

ChainState initial_state(const ModelSpec& model, const TestFunction& f, const ChainConfig& cfg, Rng& rng) {
  switch (cfg.initial) {
    case InitialState::proposal_draw:
      return make_state(model, f, model.propose(rng, 1).col(0));
    case InitialState::target_draw:
      return make_state(model, f, model.target_sample(rng, 1).col(0));
    case InitialState::explicit_point:
      return make_state(model, f, *cfg.initial_point);
  }
  throw std::logic_error("unreachable");
}

ChainTrace run_chain_from(const ModelSpec& model, const TestFunction& f, const ChainConfig& cfg,
                          ChainState state, Rng& rng) {
  if (cfg.pool_size < 2) throw std::invalid_argument("chain: pool size must be at least 2");
  ChainTrace trace;
  trace.states.reserve(cfg.iterations + 1);
  trace.state_f_values.reserve(cfg.iterations + 1);
  trace.recycled_estimates.reserve(cfg.iterations);
  trace.states.push_back(state.point);
  trace.state_f_values.push_back(state.f_value);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    StepResult step = isir_step(model, state, f, cfg.pool_size, rng);
    trace.recycled_estimates.push_back(snis_estimate(step.pool.log_weights, step.pool.f_values));
    state = std::move(step.state);
    trace.states.push_back(state.point);
    trace.state_f_values.push_back(state.f_value);
    if (cfg.retain_pools) trace.pools.push_back(std::move(step.pool));
  }
  return trace;
}

ChainTrace run_chain(const ModelSpec& model, const TestFunction& f, const ChainConfig& cfg, Rng& rng) {
  cfg.validate(model);
  ChainState state = initial_state(model, f, cfg, rng);
  return run_chain_from(model, f, cfg, std::move(state), rng);
}

KeyRelationResult key_relation_check(const ModelSpec& model, const TestFunction& f, const Point& y,
                                     std::size_t pool_size, std::size_t replications, Rng& rng,
                                     std::size_t reference_draws) {
  if (pool_size < 2) throw std::invalid_argument("key_relation_check: pool size must be at least 2");
  if (replications < 2 || reference_draws < 2) {
    throw std::invalid_argument("key_relation_check: need at least two replications and draws");
  }
  const double n = static_cast<double>(pool_size);
  const double wy_fy = std::exp(model.log_weight(y)) * evaluate_bounded(f, y);

  std::vector<double> reference(reference_draws);
  constexpr std::size_t kChunk = 1 << 16;
  for (std::size_t done = 0; done < reference_draws; done += kChunk) {
    const std::size_t m = std::min(kChunk, reference_draws - done);
    const PointMatrix x = model.propose(rng, m);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      reference[done + static_cast<std::size_t>(c)] =
          std::exp(model.log_weight(x.col(c))) * evaluate_bounded(f, x.col(c));
    }
  }
  const MeanAndError lambda_wf = mean_and_error(reference);

  std::vector<double> statistic(replications);
  for (std::size_t r = 0; r < replications; ++r) {
    // The slot is drawn to keep the pool construction identical to isir_step;
    // the statistic itself is permutation invariant.
    (void)rng.index(pool_size);
    const PointMatrix fresh = model.propose(rng, pool_size - 1);
    std::vector<double> terms(pool_size);
    terms[0] = wy_fy;
    for (Eigen::Index c = 0; c < fresh.cols(); ++c) {
      terms[static_cast<std::size_t>(c) + 1] =
          std::exp(model.log_weight(fresh.col(c))) * evaluate_bounded(f, fresh.col(c));
    }
    statistic[r] = pairwise_sum(terms) / n;
  }
  const MeanAndError empirical = mean_and_error(statistic);

  KeyRelationResult out;
  out.empirical_mean = empirical.mean;
  out.empirical_se = empirical.standard_error;
  out.closed_form = (1.0 - 1.0 / n) * lambda_wf.mean + wy_fy / n;
  out.closed_form_se = (1.0 - 1.0 / n) * lambda_wf.standard_error;
  const double se = std::hypot(out.empirical_se, out.closed_form_se);
  out.z_score = se > 0.0 ? (out.empirical_mean - out.closed_form) / se : 0.0;
  return out;
}

}  // namespace brsnis
