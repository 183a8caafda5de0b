#pragma once

#include <brsnis/model.hpp>
#include <brsnis/random.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace brsnis {

/// Current i-SIR state with its cached log-weight and test-function value.
struct ChainState {
  Point point;
  double log_weight = 0.0;
  double f_value = 0.0;
};

/// Evaluates the weight and test function at `point`.
ChainState make_state(const ModelSpec& model, const TestFunction& f, Point point);

/// One candidate pool. Indices are 0-based: the previous state sits at
/// column `insertion_index`, every other column is a fresh proposal draw.
struct WeightedPool {
  PointMatrix points;
  std::vector<double> log_weights;
  std::vector<double> f_values;
  std::size_t insertion_index = 0;

  [[nodiscard]] std::size_t size() const { return log_weights.size(); }
};

struct StepResult {
  ChainState state;
  WeightedPool pool;
};

/// Smallest index whose cumulative weight reaches u. If rounding leaves the
/// total short of u, the last positively weighted index is returned.
std::size_t categorical_index(std::span<const double> weights, double u);

/// Inverse-CDF draw with one uniform on (0, 1].
std::size_t categorical_draw(std::span<const double> weights, Rng& rng);

/// One i-SIR transition. RNG consumption order: insertion index, the N - 1
/// proposal draws, then the selection uniform.
StepResult isir_step(const ModelSpec& model, const ChainState& state, const TestFunction& f,
                     std::size_t pool_size, Rng& rng);

enum class InitialState { proposal_draw, explicit_point, target_draw };

struct ChainConfig {
  std::size_t pool_size = 2;
  std::size_t iterations = 1;
  InitialState initial = InitialState::proposal_draw;
  /// Used by InitialState::explicit_point.
  std::optional<Point> initial_point;
  bool retain_pools = false;

  void validate(const ModelSpec& model) const;
};

/// States Y_0..Y_k, the test function at each state, and the SNIS estimate
/// of each pool (the recycled estimates).
struct ChainTrace {
  std::vector<Point> states;
  std::vector<double> state_f_values;
  std::vector<double> recycled_estimates;
  std::vector<WeightedPool> pools;

  [[nodiscard]] std::size_t iterations() const { return recycled_estimates.size(); }
};

ChainState initial_state(const ModelSpec& model, const TestFunction& f, const ChainConfig& cfg, Rng& rng);

ChainTrace run_chain(const ModelSpec& model, const TestFunction& f, const ChainConfig& cfg, Rng& rng);

/// Continues a chain from `state` for cfg.iterations steps (cfg.initial is ignored).
ChainTrace run_chain_from(const ModelSpec& model, const TestFunction& f, const ChainConfig& cfg,
                          ChainState state, Rng& rng);

/// Monte Carlo check of E[N^{-1} sum_i w(x^i) f(x^i)] over pools drawn
/// around `y` against (1 - 1/N) lambda(w f) + w(y) f(y) / N, with
/// w = exp(log_weight) taken as is.
struct KeyRelationResult {
  double empirical_mean = 0.0;
  double empirical_se = 0.0;
  double closed_form = 0.0;
  double closed_form_se = 0.0;
  double z_score = 0.0;
};

KeyRelationResult key_relation_check(const ModelSpec& model, const TestFunction& f, const Point& y,
                                     std::size_t pool_size, std::size_t replications, Rng& rng,
                                     std::size_t reference_draws = 1'000'000);

}  // namespace brsnis
