// ccg: data generation, posterior training, calibration, experiments and the
// REST service.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ccg/errors.hpp"
#include "ccg/experiments.hpp"
#include "ccg/kvconfig.hpp"
#include "ccg/service.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

ccg::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return ccg::ExperimentConfig::from_kv(ccg::KvConfig::load(path));
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read " + path);
  return nlohmann::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual generation with conformal candidate sets for a simulated RAN agent"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "Versioned key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Base seed");
  app.add_option("--out-dir", out_dir, "Output directory");

  auto* gen = app.add_subcommand("generate-data", "Generate the evaluation and pilot datasets");
  auto* train = app.add_subcommand("train-posterior", "Train the amortized abduction posterior");
  auto* cal = app.add_subcommand("calibrate", "Calibrate CCG thresholds and write calibration.json");
  auto* run = app.add_subcommand("run-experiment", "Run table1, riskcurves, calibsize or simquality");
  std::string experiment;
  run->add_option("name", experiment, "Experiment name")->required();

  auto* serve = app.add_subcommand("serve", "Serve the REST API");
  std::string host = "127.0.0.1", posterior_path, calibration_path, log_path;
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--posterior", posterior_path, "posterior.json from train-posterior")->check(CLI::ExistingFile);
  serve->add_option("--calibration", calibration_path, "calibration.json from calibrate")->check(CLI::ExistingFile);
  serve->add_option("--log", log_path, "Episode persistence log (JSONL)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const ccg::ExperimentConfig cfg = load_config(config_path);
    nlohmann::json manifest;
    if (*gen) {
      manifest = ccg::generate_data(cfg, seed, out_dir);
    } else if (*train) {
      manifest = ccg::train_posterior_files(cfg, seed, out_dir);
    } else if (*cal) {
      manifest = ccg::calibrate_files(cfg, seed, out_dir);
    } else if (*run) {
      manifest = ccg::run_experiment(experiment, cfg, seed, out_dir);
    } else if (*serve) {
      ccg::ServiceOptions options;
      options.seed = seed;
      options.k_max = cfg.k_max;
      options.log_path = log_path;
      if (!posterior_path.empty())
        options.abductor = std::make_shared<ccg::AmortizedAbductor>(
            std::make_shared<const ccg::PosteriorModel>(ccg::PosteriorModel::from_json(read_json(posterior_path))));
      else
        std::cerr << "warning: no --posterior given; abduction falls back to the prior\n";
      ccg::Service service(options);
      if (!calibration_path.empty()) service.set_calibration(read_json(calibration_path).get<ccg::CalibrationResult>());
      std::cerr << "listening on " << host << ':' << port << '\n';
      ccg::serve(service, host, port);
      return kExitOk;
    }
    std::cout << manifest.dump(2) << '\n';
    return kExitOk;
  } catch (const ccg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
