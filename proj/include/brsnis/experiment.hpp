#pragma once

#include <brsnis/diagnostics.hpp>
#include <brsnis/model.hpp>
#include <brsnis/random.hpp>

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace brsnis::cli {

inline constexpr int kSchemaVersion = 1;

/// Invalid or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Estimator { snis, isir_state, br_snis, br_snis_bootstrap };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);

/// A schedule entry that may depend on k: a fixed integer, "last" (k - 1),
/// "half" (k / 2) or "k".
struct ScheduleValue {
  enum class Kind { fixed, last, half, iterations };
  Kind kind = Kind::fixed;
  std::size_t value = 0;

  [[nodiscard]] std::size_t resolve(std::size_t iterations) const;
};

struct ModelConfig {
  std::string type = "gaussian_mixture";  // or "logistic"
  std::size_t dim = 2;
  // Gaussian mixture overrides of the reference configuration.
  std::optional<double> weight;
  std::optional<double> student_dof;
  std::optional<double> proposal_scale;
  // Synthetic logistic regression.
  std::size_t observations = 200;
  std::size_t test_points = 100;
  double prior_precision = 0.05;
  std::vector<double> theta_star;
  std::uint64_t data_seed = 1;
  std::size_t reference_draws = 1'000'000;
  /// Logistic test function: predictive probability at this test point.
  std::size_t test_index = 0;
};

struct ConstantsConfig {
  std::optional<double> omega;
  std::optional<double> kappa;
  std::size_t kappa_draws = 1'000'000;
  std::size_t omega_restarts = 32;
  std::size_t omega_draws = 1'000'000;
  double delta = 0.1;
};

struct GridConfig {
  std::vector<std::size_t> pool_sizes;
  std::vector<std::size_t> iterations;
  std::vector<ScheduleValue> burn_in;
  std::vector<ScheduleValue> rounds;
};

struct DiagnosticConfig {
  std::string type;  // "sliced_wasserstein" or "tv_predictive"
  std::vector<std::size_t> pool_sizes;
  std::size_t max_iterations = 20;
  std::size_t chains = 1000;
  std::size_t batches = 10;
  std::size_t projections = 100;
  std::uint64_t projection_seed = 7;
  std::vector<std::size_t> budgets;
  std::size_t replications = 1000;
};

struct ExperimentConfig {
  ModelConfig model;
  bool has_model = false;
  std::vector<Estimator> estimators;
  GridConfig grid;
  std::optional<std::size_t> budget;
  std::size_t replications = 1;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  std::string output;
  ConstantsConfig constants;
  DiagnosticConfig diagnostic;
};

ExperimentConfig parse_config(const nlohmann::json& doc);

/// Applies `key=value` to the document. Dotted keys address nested objects;
/// the value is parsed as JSON and falls back to a plain string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

struct ResolvedModel {
  ModelSpec model;
  TestFunction f;
  double truth = 0.0;
  std::optional<MixtureSpec> mixture;
  std::optional<SyntheticLogisticData> logistic;
};

/// Builds the model, its test function, and pi(f). The mixture truth is
/// analytic; the logistic truth is a reference SNIS run seeded from `seed`.
ResolvedModel resolve_model(const ModelConfig& cfg, std::uint64_t seed);

struct GridPoint {
  Estimator estimator = Estimator::snis;
  std::size_t pool_size = 0;
  std::size_t iterations = 0;
  std::size_t burn_in = 0;
  std::size_t rounds = 0;
  std::size_t budget = 0;
};

/// Cartesian expansion of the grid for each estimator, in configuration order.
std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg);

/// One replication of one grid point; `draws` receives the proposal draw count.
double run_replication(const ResolvedModel& model, const GridPoint& point, Rng& rng, std::size_t& draws);

struct WeightConstants {
  double omega = 1.0;
  double kappa = 1.0;
  bool omega_estimated = false;
  bool kappa_estimated = false;
  bool omega_available = true;
  std::string omega_note;
};

/// Uses configured omega/kappa when present and estimates the rest from the model.
WeightConstants resolve_constants(const ExperimentConfig& cfg, const ResolvedModel* model);

/// All bound constants and bound values over the configured grid.
nlohmann::json cmd_bounds(const ExperimentConfig& cfg);

struct RunOutput {
  std::string csv;
  nlohmann::json summary;
};

/// CSV columns replication,estimator,N,k,k0,rounds,M,seed,estimate; the seed
/// of replication r at grid index g is derive_seed(base_seed, g, r).
RunOutput cmd_experiment(const ExperimentConfig& cfg, std::size_t threads);

/// Sliced-Wasserstein-vs-k curves or TV-predictive comparisons.
RunOutput cmd_diagnose(const ExperimentConfig& cfg, std::size_t threads);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace brsnis::cli
