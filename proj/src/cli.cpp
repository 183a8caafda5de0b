#include "brsnis/cli.hpp"

#include "brsnis/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

namespace brsnis::cli {

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 0;
  std::vector<std::string> overrides;
};

ExperimentConfig load_config(const Options& opt) {
  std::ifstream in(opt.config_path);
  if (!in) throw ConfigError("cannot open config " + opt.config_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : opt.overrides) apply_override(doc, o);
  ExperimentConfig cfg = parse_config(doc);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.out.empty()) cfg.output = opt.out;
  return cfg;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << contents;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path);
}

// CSV goes to the output path (or stdout); the summary goes to stdout and
// next to the CSV as <out>.summary.json.
void emit(const RunOutput& result, const std::string& out) {
  const std::string summary = result.summary.dump(2) + "\n";
  if (out.empty()) {
    std::cout << result.csv;
    std::cerr << summary;
    return;
  }
  write_file(out, result.csv);
  write_file(out + ".summary.json", summary);
  std::cout << summary;
}

std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Bias-reduced self-normalized importance sampling experiments"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration file")->required();
    sub->add_option("--seed", opt.seed, "Base seed (overrides the config)");
    sub->add_option("--out", opt.out, "Output path (overrides the config)");
    sub->add_option("--threads", opt.threads, "Worker threads (0 = hardware concurrency)");
    sub->add_option("--override", opt.overrides, "key=value override; dotted keys address nested objects");
  };
  CLI::App* bounds = app.add_subcommand("bounds", "Print bound constants and bound values as JSON");
  CLI::App* experiment = app.add_subcommand("experiment", "Run replications over an estimator grid");
  CLI::App* diagnose = app.add_subcommand("diagnose", "Sliced Wasserstein or predictive TV diagnostics");
  add_common(bounds);
  add_common(experiment);
  add_common(diagnose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    const ExperimentConfig cfg = load_config(opt);
    if (bounds->parsed()) {
      const std::string text = cmd_bounds(cfg).dump(2) + "\n";
      if (!cfg.output.empty()) write_file(cfg.output, text);
      std::cout << text;
    } else if (experiment->parsed()) {
      emit(cmd_experiment(cfg, worker_count(opt.threads)), cfg.output);
    } else {
      emit(cmd_diagnose(cfg, worker_count(opt.threads)), cfg.output);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
}

}  // namespace brsnis::cli
