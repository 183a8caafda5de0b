// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is the number of failures.

#include <brsnis/bounds.hpp>
#include <brsnis/diagnostics.hpp>
#include <brsnis/estimator.hpp>
#include <brsnis/experiment.hpp>
#include <brsnis/isir.hpp>
#include <brsnis/numeric.hpp>
#include <brsnis/parallel.hpp>
#include <brsnis/snis.hpp>

#include "../support.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace brsnis;
using nlohmann::json;

namespace {

const std::size_t kThreads = std::max(1u, std::thread::hardware_concurrency());

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Mixture {
  MixtureSpec spec;
  ModelSpec model;
  TestFunction f;
  double truth;

  explicit Mixture(std::size_t dim)
      : spec(reference_mixture(dim)),
        model(make_gaussian_mixture(spec)),
        f(rectangle_difference(spec)),
        truth(test_support::oracle_rectangle_difference(spec)) {}
};

struct Constants {
  double omega;
  double kappa;
};

Constants estimate_constants(const ModelSpec& model, std::uint64_t seed) {
  Rng rng(seed);
  const double kappa = estimate_kappa(model, 1'000'000, rng);
  const double omega = estimate_omega(model, 32, 1'000'000, rng);
  return {omega, kappa};
}

const Constants& mixture2_constants() {
  static const Constants c = estimate_constants(Mixture(2).model, 101);
  return c;
}

std::vector<double> snis_replications(const ModelSpec& model, const TestFunction& f, std::size_t m,
                                      std::size_t reps, std::uint64_t seed) {
  std::vector<double> out(reps);
  parallel_for(reps, kThreads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, m, r));
    const PointMatrix x = model.propose(rng, m);
    std::vector<double> lw(m), fv(m);
    for (std::size_t i = 0; i < m; ++i) {
      lw[i] = model.log_weight(x.col(static_cast<Eigen::Index>(i)));
      fv[i] = f.eval(x.col(static_cast<Eigen::Index>(i)));
    }
    out[r] = snis_estimate(lw, fv);
  });
  return out;
}

double chi_square_p_value(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (std::size_t c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (std::size_t c : counts) stat += std::pow(static_cast<double>(c) - expected, 2) / expected;
  const boost::math::chi_squared_distribution<> dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// ---------------------------------------------------------------------------

Outcome stationary_unbiasedness() {
  const Mixture m(2);
  ChainConfig cfg;
  cfg.pool_size = 32;
  cfg.iterations = 1;
  cfg.initial = InitialState::target_draw;
  std::vector<double> est(100000);
  parallel_for(est.size(), kThreads, [&](std::size_t r) {
    Rng rng(derive_seed(1, 0, r));
    est[r] = run_chain(m.model, m.f, cfg, rng).recycled_estimates[0];
  });
  const MeanAndError s = mean_and_error(est);
  const double z = (s.mean - m.truth) / s.standard_error;
  return {std::abs(z) <= 3.0,
          "mean " + fmt(s.mean) + " truth " + fmt(m.truth) + " se " + fmt(s.standard_error) + " z " + fmt(z)};
}

// Cold-start bias of the pool estimate at iterations 1..20 for each N, from
// coupled cold/stationary chain pairs.
struct BiasCurves {
  std::vector<std::size_t> pool_sizes{8, 32, 128};
  std::map<std::size_t, std::vector<MeanAndError>> bias;
};

const BiasCurves& cold_start_bias() {
  static const BiasCurves curves = [] {
    BiasCurves out;
    const Mixture m(2);
    constexpr std::size_t chains = 10000, kmax = 20;
    for (std::size_t n : out.pool_sizes) {
      std::vector<std::vector<double>> diffs(chains);
      parallel_for(chains, kThreads, [&](std::size_t r) {
        Rng rng(derive_seed(2, n, r));
        diffs[r] = coupled_bias_differences(m.model, m.f, n, kmax, rng);
      });
      std::vector<double> column(chains);
      for (std::size_t k = 0; k < kmax; ++k) {
        for (std::size_t r = 0; r < chains; ++r) column[r] = diffs[r][k];
        out.bias[n].push_back(mean_and_error(column));
      }
    }
    return out;
  }();
  return curves;
}

Outcome pool_bias_within_bound() {
  const BiasCurves& curves = cold_start_bias();
  const Constants& c = mixture2_constants();
  bool pass = true;
  double worst = 0.0;
  std::string where;
  for (std::size_t n : curves.pool_sizes) {
    const BoundConstants bc = BoundConstants::compute(c.omega, c.kappa, n);
    for (std::size_t k = 1; k <= curves.bias.at(n).size(); ++k) {
      const MeanAndError& b = curves.bias.at(n)[k - 1];
      const double bound = pool_bias_bound(bc, k);
      const double ratio = std::abs(b.mean) / (bound + 3.0 * b.standard_error);
      if (ratio > worst) {
        worst = ratio;
        where = "N=" + std::to_string(n) + " k=" + std::to_string(k) + " |bias| " + fmt(std::abs(b.mean)) +
                " bound " + fmt(bound);
      }
      pass = pass && ratio <= 1.0;
    }
  }
  return {pass, "omega " + fmt(c.omega) + " kappa " + fmt(c.kappa) + "; largest |bias| / (bound + 3 SE) " + fmt(worst) + " at " + where};
}

Outcome geometric_bias_decay() {
  const BiasCurves& curves = cold_start_bias();
  const Constants& c = mixture2_constants();
  const auto& b = curves.bias.at(32);
  std::vector<double> ks, values;
  // Resolved prefix, padded to the three points a fit needs with upper 2 SE
  // limits of the following iterations; padding can only flatten the slope.
  std::size_t resolved = 0;
  for (std::size_t k = 1; k <= b.size(); ++k) {
    const double a = std::abs(b[k - 1].mean);
    const bool is_resolved = a > 2.0 * b[k - 1].standard_error;
    if (is_resolved && resolved + 1 == k) ++resolved;
    if (resolved < k && ks.size() >= 3) break;
    ks.push_back(static_cast<double>(k));
    values.push_back(resolved >= k ? a : a + 2.0 * b[k - 1].standard_error);
  }
  const double log_rate = std::log(mixing_rate(c.omega, 32));
  if (resolved == 0 || values.size() < 3 || values.back() <= 0.0) {
    return {false, "bias not resolved at the first iterations"};
  }
  const GeometricFit fit = fit_geometric_rate(ks, values);
  return {fit.slope <= log_rate, "fitted slope " + fmt(fit.slope) + " over k=1.." + std::to_string(values.size()) +
                                     " (" + std::to_string(resolved) + " resolved), ln kappa_N " + fmt(log_rate)};
}

std::optional<cli::RunOutput> fixed_budget_run;

json fixed_budget_config() {
  return json{{"schema_version", 1},
              {"model", {{"type", "gaussian_mixture"}, {"dim", 7}}},
              {"estimators", {"snis", "br-snis-bootstrap"}},
              {"grid", {{"N", {129}}, {"k0", {"last"}}, {"rounds", {"k"}}}},
              {"budget", 16384},
              {"replications", 5000},
              {"batch", 100},
              {"seed", 4}};
}

Outcome fixed_budget_comparison() {
  fixed_budget_run = cli::cmd_experiment(cli::parse_config(fixed_budget_config()), kThreads);
  const json& grid = fixed_budget_run->summary["grid"];
  const json& snis = grid[0];
  const json& br = grid[1];
  const double bias_snis = snis["mean_abs_batch_bias"].get<double>();
  const double bias_br = br["mean_abs_batch_bias"].get<double>();
  const double mse_snis = snis["mse"].get<double>();
  const double mse_br = br["mse"].get<double>();
  const bool budget = snis["budget_matches"].get<bool>() && br["budget_matches"].get<bool>();
  return {bias_br <= 0.1 * bias_snis && mse_br <= 2.0 * mse_snis && budget,
          "mean |batch bias| SNIS " + fmt(bias_snis) + " BR-SNIS " + fmt(bias_br) + " (ratio " +
              fmt(bias_br / bias_snis) + ", need <= 0.1); overall bias SNIS " + fmt(snis["bias"].get<double>()) +
              " +- " + fmt(snis["bias_se"].get<double>()) + " BR-SNIS " + fmt(br["bias"].get<double>()) + " +- " +
              fmt(br["bias_se"].get<double>()) + "; MSE SNIS " + fmt(mse_snis) + " BR-SNIS " + fmt(mse_br) +
              " (ratio " + fmt(mse_br / mse_snis) + ", need <= 2)"};
}

Outcome snis_closed_form_bounds() {
  const Mixture m(2);
  const double kappa = mixture2_constants().kappa;
  bool pass = true;
  std::ostringstream detail;
  detail << "kappa " << fmt(kappa);
  for (std::size_t budget : {100, 1000, 10000}) {
    const auto est = snis_replications(m.model, m.f, budget, 10000, 5);
    const ReplicationSummary s = replication_stats(est, m.truth, 100);
    const double bias_bound = snis_bias_bound(kappa, budget);
    const double mse_bound = snis_mse_bound(kappa, budget);
    pass = pass && std::abs(s.bias) <= bias_bound + 3.0 * s.bias_se && s.mse <= mse_bound + 3.0 * s.mse_se;
    detail << "; M=" << budget << " |bias| " << fmt(std::abs(s.bias)) << " <= " << fmt(bias_bound) << ", MSE "
           << fmt(s.mse) << " <= " << fmt(mse_bound);
  }
  return {pass, detail.str()};
}

Outcome high_probability_coverage() {
  constexpr double delta = 0.1;
  constexpr std::size_t reps = 10000;
  // SNIS deviation bound on the 1-D Gaussian / Student pair.
  const MixtureSpec s1 = test_support::gaussian_student_1d();
  const ModelSpec m1 = make_gaussian_mixture(s1);
  Rng rng(6);
  const double omega1 = estimate_omega(m1, 8, 1'000'000, rng);
  const auto est1 = snis_replications(m1, rectangle_difference(s1), 1000, reps, 6);
  const CoverageResult c1 = coverage_check(est1, test_support::oracle_rectangle_difference(s1),
                                           snis_deviation_bound(omega1, 1000, delta), delta);
  // Rolling deviation bound on the d=2 mixture.
  const Mixture m(2);
  const Constants& c = mixture2_constants();
  const RollingConfig cfg{129, 8, 4};
  std::vector<double> est2(reps);
  parallel_for(reps, kThreads, [&](std::size_t r) {
    Rng chain_rng(derive_seed(6, 1, r));
    est2[r] = br_snis(m.model, m.f, cfg, chain_rng);
  });
  const BoundConstants bc = BoundConstants::compute(c.omega, c.kappa, 129);
  const CoverageResult c2 = coverage_check(est2, m.truth, rolling_deviation_bound(bc, delta, 4, 8), delta);
  return {c1.pass && c2.pass, "SNIS violation fraction " + fmt(c1.violation_fraction) + ", BR-SNIS violation fraction " +
                                  fmt(c2.violation_fraction)};
}

Outcome constants_reproduction() {
  const Constants c = estimate_constants(Mixture(7).model, 7);
  auto within = [](double v, double target) { return v >= target / 3.0 && v <= target * 3.0; };
  return {within(c.kappa, 700.0) && within(c.omega, 1e4), "kappa " + fmt(c.kappa) + " omega " + fmt(c.omega)};
}

// Moments of (f(y), N^{-1} sum_i w(x_i) f(x_i)) under the extended target,
// reached once through y ~ pi then a pool around y, once through pools
// reweighted by their mean weight then a state selected within the pool.
Outcome duality_moments(const Mixture& m, std::size_t n, double omega) {
  constexpr std::size_t samples = 100000;
  struct Draw {
    double fy, uf;
  };
  auto pool_stat = [&](const std::vector<double>& w, const std::vector<double>& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * f[i];
    return acc / static_cast<double>(w.size());
  };

  std::vector<Draw> forward(samples);
  {
    Rng rng(81);
    for (auto& d : forward) {
      const Point y = m.model.target_sample(rng, 1).col(0);
      const ChainState state = make_state(m.model, m.f, y);
      const StepResult s = isir_step(m.model, state, m.f, n, rng);
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(s.pool.log_weights[i]);
      d = {state.f_value, pool_stat(w, s.pool.f_values)};
    }
  }

  // Pools with density proportional to their mean weight, by rejection
  // against omega; a selected state then follows the normalized weights.
  std::vector<Draw> backward(samples);
  bool envelope_ok = true;
  {
    Rng rng(82);
    std::vector<double> w(n), lw(n), fv(n);
    for (auto& d : backward) {
      for (;;) {
        const PointMatrix x = m.model.propose(rng, n);
        for (std::size_t i = 0; i < n; ++i) {
          lw[i] = m.model.log_weight(x.col(static_cast<Eigen::Index>(i)));
          w[i] = std::exp(lw[i]);
          fv[i] = m.f.eval(x.col(static_cast<Eigen::Index>(i)));
        }
        const double mass = pairwise_sum(w) / static_cast<double>(n);
        envelope_ok = envelope_ok && mass <= omega;
        if (rng.uniform() * omega < mass) break;
      }
      d = {fv[categorical_draw(normalize_weights(lw), rng)], pool_stat(w, fv)};
    }
  }

  const std::vector<std::pair<std::string, std::function<double(const Draw&)>>> moments{
      {"E f(y)", [](const Draw& d) { return d.fy; }},
      {"E u", [](const Draw& d) { return d.uf; }},
      {"E f(y)^2", [](const Draw& d) { return d.fy * d.fy; }},
      {"E u^2", [](const Draw& d) { return d.uf * d.uf; }},
      {"E f(y) u", [](const Draw& d) { return d.fy * d.uf; }}};
  bool pass = true;
  double worst = 0.0;
  for (const auto& [name, g] : moments) {
    std::vector<double> a(samples), b(samples);
    std::transform(forward.begin(), forward.end(), a.begin(), g);
    std::transform(backward.begin(), backward.end(), b.begin(), g);
    const MeanAndError ma = mean_and_error(a), mb = mean_and_error(b);
    const double z = (ma.mean - mb.mean) / std::hypot(ma.standard_error, mb.standard_error);
    worst = std::max(worst, std::abs(z));
    pass = pass && std::abs(z) <= 4.0;
  }
  return {pass && envelope_ok, "max |z| " + fmt(worst) + (envelope_ok ? "" : ", mean pool weight exceeded omega")};
}

Outcome kernel_invariants() {
  const Mixture m(2);
  std::ostringstream detail;
  bool pass = true;

  // Insertion index uniformity along one chain.
  {
    constexpr std::size_t n = 8;
    Rng rng(80);
    ChainState y = make_state(m.model, m.f, m.model.propose(rng, 1).col(0));
    std::vector<std::size_t> counts(n, 0);
    for (int i = 0; i < 100000; ++i) {
      StepResult s = isir_step(m.model, y, m.f, n, rng);
      ++counts[s.pool.insertion_index];
      y = std::move(s.state);
    }
    const double p = chi_square_p_value(counts);
    pass = pass && p > 0.001;
    detail << "insertion chi-square p " << fmt(p);
  }
  // Retention under constant weights.
  {
    constexpr std::size_t n = 4;
    ModelSpec flat = m.model;
    flat.log_weight = [](const PointView&) { return 0.0; };
    Rng rng(83);
    ChainState y = make_state(flat, m.f, flat.propose(rng, 1).col(0));
    constexpr int steps = 100000;
    int kept = 0;
    for (int i = 0; i < steps; ++i) {
      StepResult s = isir_step(flat, y, m.f, n, rng);
      kept += s.state.point == y.point ? 1 : 0;
      y = std::move(s.state);
    }
    const double freq = static_cast<double>(kept) / steps;
    const double z = (freq - 0.25) / std::sqrt(0.25 * 0.75 / steps);
    pass = pass && std::abs(z) <= 4.0;
    detail << "; retention " << fmt(freq) << " (z " << fmt(z) << ")";
  }
  // Key relation at the first mixture mean.
  {
    Rng rng(84);
    const KeyRelationResult r = key_relation_check(m.model, m.f, m.spec.means[0], 16, 100000, rng);
    pass = pass && std::abs(r.z_score) <= 3.0;
    detail << "; key relation z " << fmt(r.z_score);
  }
  // Duality of the two routes to the extended target.
  {
    const Outcome d = duality_moments(m, 8, mixture2_constants().omega);
    pass = pass && d.pass;
    detail << "; duality " << d.detail;
  }
  return {pass, detail.str()};
}

std::optional<cli::RunOutput> sw_run;

json sw_config() {
  return json{{"schema_version", 1},
              {"model", {{"type", "gaussian_mixture"}, {"dim", 2}}},
              {"seed", 9},
              {"diagnostic",
               {{"type", "sliced_wasserstein"},
                {"N", {8, 32, 128}},
                {"k_max", 20},
                {"chains", 1000},
                {"batches", 10},
                {"projections", 100}}}};
}

Outcome sliced_wasserstein_mixing() {
  const cli::ExperimentConfig cfg = cli::parse_config(sw_config());
  sw_run = cli::cmd_diagnose(cfg, kThreads);
  const json& curves = sw_run->summary["curves"];
  bool pass = true;
  std::ostringstream detail;
  const std::size_t t_small = curves[0]["mixing_time"].get<std::size_t>();
  const std::size_t k_star = std::min<std::size_t>(2 * t_small, 20);
  detail << "k* = " << k_star;
  std::vector<double> at_star, se_star;
  for (const auto& c : curves) {
    const auto sw = c["sw_mean"].get<std::vector<double>>();
    const auto se = c["sw_se"].get<std::vector<double>>();
    bool monotone = sw.back() < sw.front();
    for (std::size_t k = 0; k + 1 < sw.size(); ++k) monotone = monotone && sw[k + 1] <= sw[k] + 2.0 * std::hypot(se[k], se[k + 1]);
    pass = pass && monotone;
    at_star.push_back(sw[k_star]);
    se_star.push_back(se[k_star]);
    detail << "; N=" << c["N"].get<std::size_t>() << " SW(0) " << fmt(sw.front()) << " SW(k*) " << fmt(sw[k_star])
           << (monotone ? "" : " not decreasing");
  }
  for (std::size_t i = 0; i + 1 < at_star.size(); ++i) {
    pass = pass && at_star[i + 1] <= at_star[i] + 2.0 * std::hypot(se_star[i], se_star[i + 1]);
  }
  detail << "; floor " << fmt(sw_run->summary["noise_floor"].get<double>());
  return {pass, detail.str()};
}

std::optional<cli::RunOutput> tv_run;

json tv_config() {
  return json{{"schema_version", 1},
              {"model",
               {{"type", "logistic"}, {"dim", 5}, {"observations", 200}, {"test_points", 100},
                {"reference_draws", 1'000'000}}},
              {"seed", 10},
              {"diagnostic", {{"type", "tv_predictive"}, {"N", {9, 33}}, {"budgets", {32, 512}}, {"replications", 1000}}}};
}

Outcome logistic_tv_ordering() {
  tv_run = cli::cmd_diagnose(cli::parse_config(tv_config()), kThreads);
  bool pass = true;
  std::ostringstream detail;
  for (const auto& c : tv_run->summary["comparisons"]) {
    const double s = c["tv_snis"].get<double>();
    const double b = c["tv_br_snis"].get<double>();
    pass = pass && b <= s;
    detail << "M=" << c["M"].get<std::size_t>() << " TV SNIS " << fmt(s) << " BR-SNIS " << fmt(b) << "; ";
  }
  return {pass, detail.str()};
}

Outcome determinism() {
  bool pass = true;
  std::ostringstream detail;
  // Fixed-budget experiment: reuse the criterion run when it happened, else a reduced copy.
  json fixed = fixed_budget_config();
  if (!fixed_budget_run) fixed["replications"] = 200;
  const cli::ExperimentConfig fcfg = cli::parse_config(fixed);
  const std::string reference = fixed_budget_run ? fixed_budget_run->csv : cli::cmd_experiment(fcfg, 1).csv;
  const std::string again = cli::cmd_experiment(fcfg, kThreads + 2).csv;
  pass = pass && again == reference;
  detail << "fixed-budget CSV " << (again == reference ? "identical" : "differs");

  json sw = sw_config();
  if (!sw_run) sw["diagnostic"]["chains"] = 200;
  const cli::ExperimentConfig scfg = cli::parse_config(sw);
  const std::string sw_ref = sw_run ? sw_run->csv : cli::cmd_diagnose(scfg, 1).csv;
  const bool sw_same = cli::cmd_diagnose(scfg, kThreads + 1).csv == sw_ref;
  pass = pass && sw_same;
  detail << "; SW CSV " << (sw_same ? "identical" : "differs");

  json tv = tv_config();
  if (!tv_run) tv["diagnostic"]["replications"] = 100;
  const cli::ExperimentConfig tcfg = cli::parse_config(tv);
  const std::string tv_ref = tv_run ? tv_run->csv : cli::cmd_diagnose(tcfg, 1).csv;
  const bool tv_same = cli::cmd_diagnose(tcfg, kThreads + 3).csv == tv_ref;
  pass = pass && tv_same;
  detail << "; TV CSV " << (tv_same ? "identical" : "differs");
  return {pass, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"stationary unbiasedness", stationary_unbiasedness},
      {"pool bias within bound", pool_bias_within_bound},
      {"geometric bias decay", geometric_bias_decay},
      {"fixed-budget bias and MSE", fixed_budget_comparison},
      {"SNIS closed-form bounds", snis_closed_form_bounds},
      {"high-probability coverage", high_probability_coverage},
      {"weight constants", constants_reproduction},
      {"kernel invariants", kernel_invariants},
      {"sliced Wasserstein mixing", sliced_wasserstein_mixing},
      {"logistic TV ordering", logistic_tv_ordering},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += o.pass ? 0 : 1;
    std::printf("%s %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures;
}
