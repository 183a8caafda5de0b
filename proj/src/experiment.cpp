#include "brsnis/experiment.hpp"

#include "brsnis/bounds.hpp"
#include "brsnis/estimator.hpp"
#include "brsnis/isir.hpp"
#include "brsnis/numeric.hpp"
#include "brsnis/parallel.hpp"
#include "brsnis/snis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace brsnis::cli {

using nlohmann::json;

namespace {

// Stream indices outside the range used by grid points.
constexpr std::uint64_t kConstantsStream = 0xFFFF'FFFF'FFFF'FF00ULL;
constexpr std::uint64_t kReferenceStream = 0xFFFF'FFFF'FFFF'FF01ULL;
constexpr std::uint64_t kDiagnosticReferenceStream = 0xFFFF'FFFF'0000'0000ULL;

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return obj.at(key).get<T>();
}

template <class T>
std::optional<T> get_optional(const json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return obj.at(key).get<T>();
}

ScheduleValue parse_schedule_value(const json& v) {
  if (v.is_number_unsigned() || v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n < 0) throw ConfigError("schedule values must be non-negative");
    return {ScheduleValue::Kind::fixed, static_cast<std::size_t>(n)};
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "last") return {ScheduleValue::Kind::last, 0};
    if (s == "half") return {ScheduleValue::Kind::half, 0};
    if (s == "k") return {ScheduleValue::Kind::iterations, 0};
  }
  throw ConfigError("schedule value must be an integer, \"last\", \"half\" or \"k\"");
}

std::vector<ScheduleValue> parse_schedule(const json& obj, const char* key) {
  std::vector<ScheduleValue> out;
  if (!obj.contains(key)) return out;
  const json& v = obj.at(key);
  if (v.is_array()) {
    for (const auto& item : v) out.push_back(parse_schedule_value(item));
  } else {
    out.push_back(parse_schedule_value(v));
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const json& obj, const char* key) {
  std::vector<std::size_t> out;
  if (!obj.contains(key)) return out;
  const json& v = obj.at(key);
  if (v.is_array()) return v.get<std::vector<std::size_t>>();
  out.push_back(v.get<std::size_t>());
  return out;
}

std::string csv_row(std::size_t replication, const GridPoint& p, std::uint64_t seed, double estimate) {
  std::ostringstream row;
  row << replication << ',' << to_string(p.estimator) << ',' << p.pool_size << ',' << p.iterations << ','
      << p.burn_in << ',' << p.rounds << ',' << p.budget << ',' << seed << ',' << format_double(estimate) << '\n';
  return row.str();
}

json point_json(const GridPoint& p) {
  return json{{"estimator", std::string(to_string(p.estimator))},
              {"N", p.pool_size},
              {"k", p.iterations},
              {"k0", p.burn_in},
              {"rounds", p.rounds},
              {"M", p.budget}};
}

Eigen::VectorXd default_theta_star(std::size_t dim) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < dim; ++j) {
    theta[static_cast<Eigen::Index>(j)] = (j % 2 == 0 ? 1.0 : -1.0) * std::ldexp(1.0, -static_cast<int>(j / 2));
  }
  return theta;
}

// Class-1 predictive probabilities at every test point, sum_i c_i sigma(x_j' theta_i).
std::vector<double> predictive_probabilities(const PointMatrix& thetas, std::span<const double> coefficients,
                                             const Eigen::MatrixXd& test_covariates) {
  std::vector<double> out(static_cast<std::size_t>(test_covariates.rows()), 0.0);
  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index start = 0; start < thetas.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, thetas.cols() - start);
    const Eigen::MatrixXd margins = test_covariates * thetas.middleCols(start, n);
    for (Eigen::Index j = 0; j < margins.rows(); ++j) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < n; ++c) {
        const double w = coefficients[static_cast<std::size_t>(start + c)];
        if (w != 0.0) acc += w * std::exp(log_sigmoid(margins(j, c)));
      }
      out[static_cast<std::size_t>(j)] += acc;
    }
  }
  for (double& p : out) p = std::clamp(p, 0.0, 1.0);
  return out;
}

struct LogWeightedDraws {
  PointMatrix points;
  std::vector<double> log_weights;
};

LogWeightedDraws weighted_draws(const ModelSpec& model, std::size_t count, Rng& rng) {
  LogWeightedDraws out;
  out.points = model.propose(rng, count);
  out.log_weights.resize(count);
  for (Eigen::Index c = 0; c < out.points.cols(); ++c) {
    out.log_weights[static_cast<std::size_t>(c)] = model.log_weight(out.points.col(c));
  }
  return out;
}

json bounds_for_point(const GridPoint& p, const WeightConstants& wc, double sup_bound, double delta) {
  json out = json::object();
  if (p.estimator == Estimator::snis) {
    out["bias"] = sup_bound * snis_bias_bound(wc.kappa, p.budget);
    out["mse"] = sup_bound * sup_bound * snis_mse_bound(wc.kappa, p.budget);
    if (wc.omega_available && p.budget > 1) {
      out["deviation"] = sup_bound * snis_deviation_bound(wc.omega, p.budget, delta);
    }
  } else if (p.estimator == Estimator::br_snis || p.estimator == Estimator::br_snis_bootstrap) {
    if (!wc.omega_available) return out;
    const BoundConstants c = BoundConstants::compute(wc.omega, wc.kappa, p.pool_size);
    out["bias"] = sup_bound * rolling_bias_bound(c, p.burn_in, p.iterations);
    out["mse"] = sup_bound * sup_bound * rolling_mse_bound(c, p.burn_in, p.iterations);
    out["deviation"] = sup_bound * rolling_deviation_bound(c, delta, p.burn_in, p.iterations);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::snis: return "snis";
    case Estimator::isir_state: return "isir-state";
    case Estimator::br_snis: return "br-snis";
    case Estimator::br_snis_bootstrap: return "br-snis-bootstrap";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "snis") return Estimator::snis;
  if (name == "isir-state") return Estimator::isir_state;
  if (name == "br-snis") return Estimator::br_snis;
  if (name == "br-snis-bootstrap") return Estimator::br_snis_bootstrap;
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

std::size_t ScheduleValue::resolve(std::size_t iterations) const {
  switch (kind) {
    case Kind::fixed: return value;
    case Kind::last: return iterations - 1;
    case Kind::half: return iterations / 2;
    case Kind::iterations: return iterations;
  }
  return value;
}

ExperimentConfig parse_config(const json& doc) {
  try {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (!doc.contains("schema_version")) throw ConfigError("config is missing schema_version");
    if (doc.at("schema_version").get<int>() != kSchemaVersion) {
      throw ConfigError("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    }
    ExperimentConfig cfg;
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      cfg.has_model = true;
      cfg.model.type = get_or<std::string>(m, "type", cfg.model.type);
      if (cfg.model.type != "gaussian_mixture" && cfg.model.type != "logistic") {
        throw ConfigError("unknown model type '" + cfg.model.type + "'");
      }
      cfg.model.dim = get_or<std::size_t>(m, "dim", cfg.model.dim);
      cfg.model.weight = get_optional<double>(m, "weight");
      cfg.model.student_dof = get_optional<double>(m, "student_dof");
      cfg.model.proposal_scale = get_optional<double>(m, "proposal_scale");
      cfg.model.observations = get_or<std::size_t>(m, "observations", cfg.model.observations);
      cfg.model.test_points = get_or<std::size_t>(m, "test_points", cfg.model.test_points);
      cfg.model.prior_precision = get_or<double>(m, "prior_precision", cfg.model.prior_precision);
      cfg.model.theta_star = get_or<std::vector<double>>(m, "theta_star", {});
      cfg.model.data_seed = get_or<std::uint64_t>(m, "data_seed", cfg.model.data_seed);
      cfg.model.reference_draws = get_or<std::size_t>(m, "reference_draws", cfg.model.reference_draws);
      cfg.model.test_index = get_or<std::size_t>(m, "test_index", cfg.model.test_index);
      if (cfg.model.dim == 0) throw ConfigError("model dim must be positive");
      if (!cfg.model.theta_star.empty() && cfg.model.theta_star.size() != cfg.model.dim) {
        throw ConfigError("theta_star must have dim entries");
      }
      if (cfg.model.type == "logistic" && cfg.model.test_index >= std::max<std::size_t>(cfg.model.test_points, 1)) {
        throw ConfigError("test_index must be smaller than test_points");
      }
    }
    if (doc.contains("estimator")) cfg.estimators.push_back(parse_estimator(doc.at("estimator").get<std::string>()));
    if (doc.contains("estimators")) {
      for (const auto& e : doc.at("estimators")) cfg.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    if (doc.contains("grid")) {
      const json& g = doc.at("grid");
      cfg.grid.pool_sizes = parse_sizes(g, "N");
      cfg.grid.iterations = parse_sizes(g, "k");
      cfg.grid.burn_in = parse_schedule(g, "k0");
      cfg.grid.rounds = parse_schedule(g, "rounds");
    }
    cfg.budget = get_optional<std::size_t>(doc, "budget");
    cfg.replications = get_or<std::size_t>(doc, "replications", cfg.replications);
    cfg.batch = get_or<std::size_t>(doc, "batch", cfg.replications);
    cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
    cfg.output = get_or<std::string>(doc, "output", "");
    if (cfg.replications == 0) throw ConfigError("replications must be positive");
    if (cfg.batch == 0 || cfg.replications % cfg.batch != 0) {
      throw ConfigError("batch must divide replications");
    }
    if (cfg.budget && *cfg.budget == 0) throw ConfigError("budget must be positive");
    if (doc.contains("constants")) {
      const json& c = doc.at("constants");
      cfg.constants.omega = get_optional<double>(c, "omega");
      cfg.constants.kappa = get_optional<double>(c, "kappa");
      cfg.constants.kappa_draws = get_or<std::size_t>(c, "kappa_draws", cfg.constants.kappa_draws);
      cfg.constants.omega_restarts = get_or<std::size_t>(c, "omega_restarts", cfg.constants.omega_restarts);
      cfg.constants.omega_draws = get_or<std::size_t>(c, "omega_draws", cfg.constants.omega_draws);
      cfg.constants.delta = get_or<double>(c, "delta", cfg.constants.delta);
      if (cfg.constants.omega && *cfg.constants.omega < 1.0) throw ConfigError("omega must be at least 1");
      if (cfg.constants.kappa && *cfg.constants.kappa < 1.0) throw ConfigError("kappa must be at least 1");
      if (!(cfg.constants.delta > 0.0 && cfg.constants.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    }
    if (doc.contains("diagnostic")) {
      const json& d = doc.at("diagnostic");
      DiagnosticConfig& diag = cfg.diagnostic;
      diag.type = get_or<std::string>(d, "type", "");
      diag.pool_sizes = parse_sizes(d, "N");
      diag.max_iterations = get_or<std::size_t>(d, "k_max", diag.max_iterations);
      diag.chains = get_or<std::size_t>(d, "chains", diag.chains);
      diag.batches = get_or<std::size_t>(d, "batches", diag.batches);
      diag.projections = get_or<std::size_t>(d, "projections", diag.projections);
      diag.projection_seed = get_or<std::uint64_t>(d, "projection_seed", diag.projection_seed);
      diag.budgets = parse_sizes(d, "budgets");
      diag.replications = get_or<std::size_t>(d, "replications", diag.replications);
      if (diag.type != "sliced_wasserstein" && diag.type != "tv_predictive") {
        throw ConfigError("diagnostic type must be sliced_wasserstein or tv_predictive");
      }
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override must look like key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' does not address an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ResolvedModel resolve_model(const ModelConfig& cfg, std::uint64_t seed) {
  ResolvedModel out;
  try {
    if (cfg.type == "gaussian_mixture") {
      MixtureSpec spec = reference_mixture(cfg.dim);
      if (cfg.weight) spec.weight = *cfg.weight;
      if (cfg.student_dof) spec.student_dof = *cfg.student_dof;
      if (cfg.proposal_scale) spec.proposal_scale = *cfg.proposal_scale;
      out.model = make_gaussian_mixture(spec);
      out.f = rectangle_difference(spec);
      out.truth = rectangle_difference_expectation(spec);
      out.mixture = spec;
      return out;
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.type != "logistic") throw ConfigError("unknown model type '" + cfg.type + "'");
  if (cfg.test_points == 0) throw ConfigError("logistic model needs at least one test point");
  const Eigen::VectorXd theta_star =
      cfg.theta_star.empty() ? default_theta_star(cfg.dim)
                             : Eigen::Map<const Eigen::VectorXd>(cfg.theta_star.data(),
                                                                 static_cast<Eigen::Index>(cfg.theta_star.size()));
  SyntheticLogisticData data;
  try {
    data = synthetic_logistic_data(theta_star, cfg.observations, cfg.test_points, cfg.prior_precision, cfg.data_seed);
    out.model = make_logistic_posterior(data.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const Eigen::VectorXd x = data.test_covariates.row(static_cast<Eigen::Index>(cfg.test_index)).transpose();
  out.f = TestFunction{[x](const PointView& theta) { return logistic_probability(theta, x); }, 1.0};

  Rng rng(derive_seed(seed, kReferenceStream, 0));
  const LogWeightedDraws ref = weighted_draws(out.model, cfg.reference_draws, rng);
  std::vector<double> fv(ref.log_weights.size());
  for (Eigen::Index c = 0; c < ref.points.cols(); ++c) fv[static_cast<std::size_t>(c)] = out.f.eval(ref.points.col(c));
  out.truth = snis_estimate(ref.log_weights, fv);
  out.logistic = std::move(data);
  return out;
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg) {
  if (cfg.estimators.empty()) throw ConfigError("no estimator configured");
  std::vector<GridPoint> points;
  for (Estimator e : cfg.estimators) {
    if (e == Estimator::snis) {
      if (cfg.budget) {
        points.push_back(GridPoint{e, 0, 0, 0, 0, *cfg.budget});
        continue;
      }
      if (cfg.grid.pool_sizes.empty() || cfg.grid.iterations.empty()) {
        throw ConfigError("snis needs a budget or an (N, k) grid");
      }
      for (std::size_t n : cfg.grid.pool_sizes) {
        for (std::size_t k : cfg.grid.iterations) {
          if (n < 2 || k < 1) throw ConfigError("grid needs N >= 2 and k >= 1");
          points.push_back(GridPoint{e, 0, 0, 0, 0, (n - 1) * k});
        }
      }
      continue;
    }
    if (cfg.grid.pool_sizes.empty()) throw ConfigError(std::string(to_string(e)) + " needs grid.N");
    std::vector<ScheduleValue> burn_in = cfg.grid.burn_in;
    if (burn_in.empty()) {
      burn_in.push_back(e == Estimator::br_snis_bootstrap ? ScheduleValue{ScheduleValue::Kind::last, 0}
                                                          : ScheduleValue{ScheduleValue::Kind::fixed, 0});
    }
    std::vector<ScheduleValue> rounds = cfg.grid.rounds;
    if (e != Estimator::br_snis_bootstrap) {
      rounds = {ScheduleValue{ScheduleValue::Kind::fixed, 1}};
    } else if (rounds.empty()) {
      rounds.push_back(ScheduleValue{ScheduleValue::Kind::iterations, 0});
    }
    for (std::size_t n : cfg.grid.pool_sizes) {
      if (n < 2) throw ConfigError("grid N must be at least 2");
      std::vector<std::size_t> ks = cfg.grid.iterations;
      if (cfg.budget) {
        if (*cfg.budget % (n - 1) != 0) {
          throw ConfigError("budget " + std::to_string(*cfg.budget) + " is not a multiple of N - 1 = " +
                            std::to_string(n - 1));
        }
        ks = {*cfg.budget / (n - 1)};
      }
      if (ks.empty()) throw ConfigError(std::string(to_string(e)) + " needs grid.k or a budget");
      for (std::size_t k : ks) {
        if (k < 1) throw ConfigError("grid k must be at least 1");
        for (const ScheduleValue& b : burn_in) {
          const std::size_t k0 = b.resolve(k);
          if (k0 >= k) throw ConfigError("burn-in k0 must be smaller than k");
          for (const ScheduleValue& r : rounds) {
            const std::size_t nr = r.resolve(k);
            if (nr < 1) throw ConfigError("rounds must be at least 1");
            points.push_back(GridPoint{e, n, k, k0, nr, (n - 1) * k});
          }
        }
      }
    }
  }
  return points;
}

double run_replication(const ResolvedModel& resolved, const GridPoint& p, Rng& rng, std::size_t& draws) {
  const CountingModel counted(resolved.model);
  const ModelSpec& model = counted.spec();
  double estimate = 0.0;
  switch (p.estimator) {
    case Estimator::snis: {
      const LogWeightedDraws d = weighted_draws(model, p.budget, rng);
      std::vector<double> fv(d.log_weights.size());
      for (Eigen::Index c = 0; c < d.points.cols(); ++c) {
        fv[static_cast<std::size_t>(c)] = evaluate_bounded(resolved.f, d.points.col(c));
      }
      estimate = snis_estimate(d.log_weights, fv);
      break;
    }
    case Estimator::isir_state: {
      ChainConfig chain;
      chain.pool_size = p.pool_size;
      chain.iterations = p.iterations;
      const ChainTrace trace = run_chain(model, resolved.f, chain, rng);
      const std::span<const double> window(trace.state_f_values.data() + p.burn_in + 1, p.iterations - p.burn_in);
      estimate = pairwise_sum(window) / static_cast<double>(window.size());
      break;
    }
    case Estimator::br_snis:
      estimate = br_snis(model, resolved.f, RollingConfig{p.pool_size, p.iterations, p.burn_in}, rng);
      break;
    case Estimator::br_snis_bootstrap: {
      const CachedSampleBank bank = build_sample_bank(model, resolved.f, p.budget, rng);
      estimate = bootstrap_br_snis(bank, RollingConfig{p.pool_size, p.iterations, p.burn_in}, p.rounds, rng);
      break;
    }
  }
  draws = counted.proposal_draws();
  return estimate;
}

WeightConstants resolve_constants(const ExperimentConfig& cfg, const ResolvedModel* model) {
  WeightConstants out;
  if (cfg.constants.kappa) {
    out.kappa = *cfg.constants.kappa;
  } else {
    if (model == nullptr) throw ConfigError("kappa not supplied and no model configured");
    Rng rng(derive_seed(cfg.seed, kConstantsStream, 0));
    out.kappa = estimate_kappa(model->model, cfg.constants.kappa_draws, rng);
    out.kappa_estimated = true;
  }
  if (cfg.constants.omega) {
    out.omega = *cfg.constants.omega;
  } else {
    if (model == nullptr) throw ConfigError("omega not supplied and no model configured");
    Rng rng(derive_seed(cfg.seed, kConstantsStream, 1));
    out.omega_estimated = true;
    try {
      out.omega = estimate_omega(model->model, cfg.constants.omega_restarts, cfg.constants.omega_draws, rng);
    } catch (const UnboundedWeightError& e) {
      out.omega_available = false;
      out.omega = std::numeric_limits<double>::infinity();
      out.omega_note = e.what();
    }
  }
  return out;
}

json cmd_bounds(const ExperimentConfig& cfg) {
  std::optional<ResolvedModel> resolved;
  if (cfg.has_model && (!cfg.constants.omega || !cfg.constants.kappa)) resolved = resolve_model(cfg.model, cfg.seed);
  const WeightConstants wc = resolve_constants(cfg, resolved ? &*resolved : nullptr);
  if (!wc.omega_available) throw std::runtime_error(wc.omega_note);
  if (cfg.grid.pool_sizes.empty()) throw ConfigError("bounds needs grid.N");

  const double delta = cfg.constants.delta;
  json out;
  out["schema_version"] = kSchemaVersion;
  out["omega"] = wc.omega;
  out["kappa"] = wc.kappa;
  out["omega_estimated"] = wc.omega_estimated;
  out["kappa_estimated"] = wc.kappa_estimated;
  out["estimated"] = wc.omega_estimated || wc.kappa_estimated;
  out["delta"] = delta;
  out["pools"] = json::array();
  for (std::size_t n : cfg.grid.pool_sizes) {
    if (n < 2) throw ConfigError("grid N must be at least 2");
    const BoundConstants c = BoundConstants::compute(wc.omega, wc.kappa, n);
    json pool{{"N", n},
              {"mixing_rate", c.mixing_rate},
              {"mixing_time", c.mixing_time},
              {"bias_constant", c.bias},
              {"mse_constants", c.mse},
              {"covariance_constants", c.covariance},
              {"rolling_bias_constant", c.rolling_bias},
              {"rolling_mse_constants", c.rolling_mse},
              {"rolling_mse_total", c.rolling_mse_total},
              {"deviation_constant", c.deviation},
              {"pool_mse_bound", pool_mse_bound(c)},
              {"pool_covariance_bound_lag1", pool_covariance_bound(c, 1)}};
    std::vector<std::size_t> ks = cfg.grid.iterations;
    if (cfg.budget) {
      if (*cfg.budget % (n - 1) != 0) throw ConfigError("budget is not a multiple of N - 1");
      ks = {*cfg.budget / (n - 1)};
    }
    std::vector<ScheduleValue> burn_in = cfg.grid.burn_in;
    if (burn_in.empty()) burn_in.push_back(ScheduleValue{});
    json schedules = json::array();
    for (std::size_t k : ks) {
      if (k < 1) throw ConfigError("grid k must be at least 1");
      for (const ScheduleValue& b : burn_in) {
        const std::size_t k0 = b.resolve(k);
        if (k0 >= k) throw ConfigError("burn-in k0 must be smaller than k");
        schedules.push_back(json{{"k", k},
                                 {"k0", k0},
                                 {"M", (n - 1) * k},
                                 {"pool_bias_bound", pool_bias_bound(c, k)},
                                 {"rolling_bias_bound", rolling_bias_bound(c, k0, k)},
                                 {"rolling_mse_bound", rolling_mse_bound(c, k0, k)},
                                 {"rolling_deviation_bound", rolling_deviation_bound(c, delta, k0, k)}});
      }
    }
    pool["schedules"] = std::move(schedules);
    out["pools"].push_back(std::move(pool));
  }
  if (cfg.budget) {
    out["snis"] = json{{"M", *cfg.budget},
                       {"bias_bound", snis_bias_bound(wc.kappa, *cfg.budget)},
                       {"mse_bound", snis_mse_bound(wc.kappa, *cfg.budget)}};
    if (*cfg.budget > 1) out["snis"]["deviation_bound"] = snis_deviation_bound(wc.omega, *cfg.budget, delta);
  }
  return out;
}

RunOutput cmd_experiment(const ExperimentConfig& cfg, std::size_t threads) {
  if (!cfg.has_model) throw ConfigError("experiment needs a model");
  const std::vector<GridPoint> points = expand_grid(cfg);
  const ResolvedModel resolved = resolve_model(cfg.model, cfg.seed);
  const WeightConstants wc = resolve_constants(cfg, &resolved);

  const std::size_t reps = cfg.replications;
  std::vector<double> estimates(points.size() * reps);
  std::vector<std::size_t> draws(points.size() * reps);
  parallel_for(estimates.size(), threads, [&](std::size_t i) {
    const std::size_t g = i / reps;
    const std::size_t r = i % reps;
    Rng rng(derive_seed(cfg.seed, g, r));
    estimates[i] = run_replication(resolved, points[g], rng, draws[i]);
  });

  std::string csv = "replication,estimator,N,k,k0,rounds,M,seed,estimate\n";
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["seed"] = cfg.seed;
  summary["truth"] = resolved.truth;
  summary["replications"] = reps;
  summary["batch"] = cfg.batch;
  summary["omega"] = wc.omega_available ? json(wc.omega) : json(nullptr);
  summary["kappa"] = wc.kappa;
  summary["omega_estimated"] = wc.omega_estimated;
  summary["kappa_estimated"] = wc.kappa_estimated;
  if (!wc.omega_available) summary["omega_note"] = wc.omega_note;
  summary["delta"] = cfg.constants.delta;
  summary["grid"] = json::array();

  for (std::size_t g = 0; g < points.size(); ++g) {
    const GridPoint& p = points[g];
    for (std::size_t r = 0; r < reps; ++r) {
      csv += csv_row(r, p, derive_seed(cfg.seed, g, r), estimates[g * reps + r]);
    }
    const std::span<const double> est(estimates.data() + g * reps, reps);
    const ReplicationSummary s = replication_stats(est, resolved.truth, cfg.batch);
    const auto first = draws.begin() + static_cast<std::ptrdiff_t>(g * reps);
    const bool consistent = std::all_of(first, first + static_cast<std::ptrdiff_t>(reps),
                                        [&](std::size_t d) { return d == *first; });
    json entry = point_json(p);
    entry["mean_estimate"] = mean_and_error(est).mean;
    entry["bias"] = s.bias;
    entry["bias_se"] = s.bias_se;
    entry["mse"] = s.mse;
    entry["mse_se"] = s.mse_se;
    entry["mean_abs_batch_bias"] = s.mean_abs_batch_bias;
    entry["batch_bias"] = s.batch_bias;
    entry["batch_mse"] = s.batch_mse;
    // Chain-based estimators spend one extra draw on the initial state.
    const std::size_t initial = p.estimator == Estimator::snis ? 0 : 1;
    entry["proposal_draws_per_replication"] = *first;
    entry["initial_state_draws"] = initial;
    entry["budget_draws"] = *first - initial;
    entry["budget_matches"] = consistent && *first - initial == p.budget;
    entry["bounds"] = bounds_for_point(p, wc, resolved.f.sup_bound, cfg.constants.delta);
    summary["grid"].push_back(std::move(entry));
  }
  // Relative bias of each chain-based estimator against SNIS at the same budget.
  for (auto& entry : summary["grid"]) {
    if (entry["estimator"] == "snis") continue;
    for (const auto& other : summary["grid"]) {
      if (other["estimator"] == "snis" && other["M"] == entry["M"] &&
          other["mean_abs_batch_bias"].get<double>() > 0.0) {
        entry["abs_batch_bias_ratio_to_snis"] =
            entry["mean_abs_batch_bias"].get<double>() / other["mean_abs_batch_bias"].get<double>();
        entry["mse_ratio_to_snis"] = entry["mse"].get<double>() / other["mse"].get<double>();
      }
    }
  }
  return RunOutput{std::move(csv), std::move(summary)};
}

namespace {

RunOutput diagnose_sliced_wasserstein(const ExperimentConfig& cfg, std::size_t threads) {
  const DiagnosticConfig& d = cfg.diagnostic;
  const ResolvedModel resolved = resolve_model(cfg.model, cfg.seed);
  if (!resolved.model.has_target_sampler()) {
    throw ConfigError("sliced_wasserstein diagnostic needs a model with a target sampler");
  }
  const std::vector<std::size_t> pool_sizes = d.pool_sizes.empty() ? cfg.grid.pool_sizes : d.pool_sizes;
  if (pool_sizes.empty()) throw ConfigError("sliced_wasserstein diagnostic needs N values");
  if (d.chains < 2 || d.batches < 2) throw ConfigError("sliced_wasserstein needs at least two chains and batches");
  const WeightConstants wc = resolve_constants(cfg, &resolved);
  const std::size_t dim = resolved.model.dim;
  const std::size_t kmax = d.max_iterations;
  const auto dim_i = static_cast<Eigen::Index>(dim);

  // Reference target samples per batch, shared by all N, plus a second set for the noise floor.
  std::vector<PointMatrix> reference(d.batches), floor_reference(d.batches);
  for (std::size_t b = 0; b < d.batches; ++b) {
    Rng rng(derive_seed(cfg.seed, kDiagnosticReferenceStream, b));
    reference[b] = resolved.model.target_sample(rng, d.chains);
    floor_reference[b] = resolved.model.target_sample(rng, d.chains);
  }
  Rng direction_rng(d.projection_seed);
  const Eigen::MatrixXd directions = random_directions(dim, d.projections, direction_rng);
  auto sw = [&](const PointMatrix& a, const PointMatrix& b) {
    Rng rng(d.projection_seed);
    return sliced_wasserstein(a, b, directions, rng);
  };
  std::vector<double> floor_values(d.batches);
  for (std::size_t b = 0; b < d.batches; ++b) floor_values[b] = sw(reference[b], floor_reference[b]);
  const MeanAndError floor = mean_and_error(floor_values);

  std::string csv = "N,k,sw_mean,sw_se\n";
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["seed"] = cfg.seed;
  summary["diagnostic"] = "sliced_wasserstein";
  summary["omega"] = wc.omega_available ? json(wc.omega) : json(nullptr);
  summary["kappa"] = wc.kappa;
  summary["noise_floor"] = floor.mean;
  summary["noise_floor_se"] = floor.standard_error;
  summary["curves"] = json::array();

  for (std::size_t gi = 0; gi < pool_sizes.size(); ++gi) {
    const std::size_t n = pool_sizes[gi];
    if (n < 2) throw ConfigError("diagnostic N must be at least 2");
    const std::size_t total = d.chains * d.batches;
    // states[k] holds Y_k of every chain as columns.
    std::vector<PointMatrix> states(kmax + 1, PointMatrix(dim_i, static_cast<Eigen::Index>(total)));
    parallel_for(total, threads, [&](std::size_t c) {
      Rng rng(derive_seed(cfg.seed, gi, c));
      ChainConfig chain;
      chain.pool_size = n;
      chain.iterations = std::max<std::size_t>(kmax, 1);
      const ChainTrace trace = run_chain(resolved.model, resolved.f, chain, rng);
      for (std::size_t k = 0; k <= kmax; ++k) states[k].col(static_cast<Eigen::Index>(c)) = trace.states[k];
    });
    std::vector<double> values((kmax + 1) * d.batches);
    parallel_for(values.size(), threads, [&](std::size_t i) {
      const std::size_t k = i / d.batches;
      const std::size_t b = i % d.batches;
      const PointMatrix block = states[k].middleCols(static_cast<Eigen::Index>(b * d.chains),
                                                     static_cast<Eigen::Index>(d.chains));
      values[i] = sw(block, reference[b]);
    });
    std::vector<double> means(kmax + 1), ses(kmax + 1);
    for (std::size_t k = 0; k <= kmax; ++k) {
      const MeanAndError m = mean_and_error(std::span<const double>(values.data() + k * d.batches, d.batches));
      means[k] = m.mean;
      ses[k] = m.standard_error;
      csv += std::to_string(n) + ',' + std::to_string(k) + ',' + format_double(m.mean) + ',' +
             format_double(m.standard_error) + '\n';
    }
    json curve{{"N", n}, {"sw_mean", means}, {"sw_se", ses}};
    if (wc.omega_available) {
      const double rate = mixing_rate(wc.omega, n);
      curve["mixing_rate"] = rate;
      curve["log_mixing_rate"] = std::log(rate);
      curve["mixing_time"] = mixing_time(rate);
    }
    // Fit the excess over the noise floor while it is resolved (> 2 combined SEs).
    std::vector<double> ks, excess;
    for (std::size_t k = 0; k <= kmax; ++k) {
      const double e = means[k] - floor.mean;
      if (e > 2.0 * std::hypot(ses[k], floor.standard_error)) {
        ks.push_back(static_cast<double>(k));
        excess.push_back(e);
      } else {
        break;
      }
    }
    if (excess.size() >= 3) {
      const GeometricFit fit = fit_geometric_rate(ks, excess);
      curve["fitted_slope"] = fit.slope;
      curve["fitted_intercept"] = fit.intercept;
    } else {
      curve["fitted_slope"] = nullptr;
      curve["fitted_intercept"] = nullptr;
    }
    curve["fit_points"] = excess.size();
    summary["curves"].push_back(std::move(curve));
  }
  return RunOutput{std::move(csv), std::move(summary)};
}

RunOutput diagnose_tv_predictive(const ExperimentConfig& cfg, std::size_t threads) {
  const DiagnosticConfig& d = cfg.diagnostic;
  if (cfg.model.type != "logistic") throw ConfigError("tv_predictive diagnostic needs the logistic model");
  if (d.budgets.empty()) throw ConfigError("tv_predictive needs budgets");
  const std::vector<std::size_t> pool_sizes = d.pool_sizes.empty() ? cfg.grid.pool_sizes : d.pool_sizes;
  if (pool_sizes.size() != d.budgets.size()) throw ConfigError("tv_predictive needs one N per budget");
  if (d.replications < 2) throw ConfigError("tv_predictive needs at least two replications");

  const ResolvedModel resolved = resolve_model(cfg.model, cfg.seed);
  const SyntheticLogisticData& data = *resolved.logistic;
  const ModelSpec& model = resolved.model;

  // Reference predictive from one large SNIS run.
  std::vector<double> reference;
  {
    Rng rng(derive_seed(cfg.seed, kReferenceStream, 1));
    const LogWeightedDraws ref = weighted_draws(model, cfg.model.reference_draws, rng);
    reference = predictive_probabilities(ref.points, normalize_weights(ref.log_weights), data.test_covariates);
  }

  const TestFunction unit{[](const PointView&) { return 0.0; }, 1.0};
  std::string csv = "M,estimator,N,k,rounds,replications,tv_mean,tv_se\n";
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["seed"] = cfg.seed;
  summary["diagnostic"] = "tv_predictive";
  summary["test_points"] = data.test_covariates.rows();
  summary["comparisons"] = json::array();

  for (std::size_t bi = 0; bi < d.budgets.size(); ++bi) {
    const std::size_t m = d.budgets[bi];
    const std::size_t n = pool_sizes[bi];
    if (n < 2 || m % (n - 1) != 0) throw ConfigError("tv_predictive budget must be a multiple of N - 1");
    const std::size_t k = m / (n - 1);
    const RollingConfig rolling = RollingConfig::last_pool(n, k);
    std::vector<double> tv_snis(d.replications), tv_br(d.replications);
    parallel_for(d.replications, threads, [&](std::size_t r) {
      {
        Rng rng(derive_seed(cfg.seed, 2 * bi, r));
        const LogWeightedDraws draws = weighted_draws(model, m, rng);
        const PredictiveTable table{
            predictive_probabilities(draws.points, normalize_weights(draws.log_weights), data.test_covariates),
            reference};
        tv_snis[r] = tv_predictive(table);
      }
      {
        Rng rng(derive_seed(cfg.seed, 2 * bi + 1, r));
        const CachedSampleBank bank = build_sample_bank(model, unit, m, rng);
        const std::vector<double> c = bootstrap_br_snis_coefficients(bank, rolling, k, rng);
        const PredictiveTable table{predictive_probabilities(bank.points(), c, data.test_covariates), reference};
        tv_br[r] = tv_predictive(table);
      }
    });
    const MeanAndError s = mean_and_error(tv_snis);
    const MeanAndError b = mean_and_error(tv_br);
    csv += std::to_string(m) + ",snis,0,0,0," + std::to_string(d.replications) + ',' + format_double(s.mean) + ',' +
           format_double(s.standard_error) + '\n';
    csv += std::to_string(m) + ",br-snis-bootstrap," + std::to_string(n) + ',' + std::to_string(k) + ',' +
           std::to_string(k) + ',' + std::to_string(d.replications) + ',' + format_double(b.mean) + ',' +
           format_double(b.standard_error) + '\n';
    summary["comparisons"].push_back(json{{"M", m},
                                          {"N", n},
                                          {"k", k},
                                          {"rounds", k},
                                          {"tv_snis", s.mean},
                                          {"tv_snis_se", s.standard_error},
                                          {"tv_br_snis", b.mean},
                                          {"tv_br_snis_se", b.standard_error}});
  }
  return RunOutput{std::move(csv), std::move(summary)};
}

}  // namespace

RunOutput cmd_diagnose(const ExperimentConfig& cfg, std::size_t threads) {
  if (!cfg.has_model) throw ConfigError("diagnose needs a model");
  if (cfg.diagnostic.type == "sliced_wasserstein") return diagnose_sliced_wasserstein(cfg, threads);
  if (cfg.diagnostic.type == "tv_predictive") return diagnose_tv_predictive(cfg, threads);
  throw ConfigError("diagnose needs a diagnostic section");
}

}  // namespace brsnis::cli
