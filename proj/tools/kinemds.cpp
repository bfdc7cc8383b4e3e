// kinemds: network kinematics estimation from time-varying pairwise ranges.
//
// Subcommands:
//   simulate    generate two-way-ranging timestamps for a scenario
//   estimate    run ranging + kinematic estimation on a timestamp log
//   bounds      compute Cramer-Rao style lower bounds for a configuration
//   montecarlo  run a full Monte-Carlo sweep and emit a report
//
// Exit codes: 0 success, 2 configuration error, 3 numerical/identifiability error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "kinemds/harness.hpp"

namespace {

using namespace kinemds;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed) {
  const ExperimentConfig cfg = load_config(config_path);
  ensure_dir(out_dir);
  TimestampTable t = generate_timestamps(
      cfg.scenario, cfg.ranging.K, {cfg.ranging.interval_start, cfg.ranging.interval_end},
      cfg.ranging.T0, cfg.ranging.delay_model, cfg.ranging.order_L, cfg.ranging.c);
  if (cfg.ranging.sigma_m > 0 && cfg.ranging.noise_mode == "timestamp")
    t = perturb_timestamps(t, cfg.ranging.sigma_m, seed);
  save_timestamps(t, out_dir + "/timestamps.csv", out_dir + "/timestamps.json");
  std::ofstream sc(out_dir + "/scenario.json");
  sc << ensemble_to_json(cfg.scenario).dump(2) << "\n";
  std::cout << "wrote " << out_dir << "/timestamps.csv (" << t.pairs.size() << " pairs x "
            << t.exchanges << " exchanges)\n";
  return 0;
}

int cmd_estimate(const std::string& config_path, const std::string& timestamps_csv,
                 const std::string& out_dir, std::uint64_t seed) {
  const ExperimentConfig cfg = load_config(config_path);
  ensure_dir(out_dir);
  const std::string sidecar =
      std::filesystem::path(timestamps_csv).replace_extension(".json").string();
  TimestampTable t = load_timestamps(timestamps_csv, sidecar);
  DelayMeasurements meas = measure_delays(t, cfg.ranging.noise_mode == "delay"
                                                 ? cfg.ranging.sigma_m
                                                 : 0.0,
                                          seed);
  const RangeParameterSet params = dynamic_ranging(t, meas.tau, cfg.ranging.order_L);
  save_range_params(params, out_dir + "/range_params.csv");

  nlohmann::json result;
  if (cfg.estimation.has("MDS")) {
    const CenteredGramSet grams = build_centered_grams(params);
    const PositionEstimate mds = mds_position(grams.B0, cfg.scenario.dims);
    result["X_hat"] = ensemble_to_json(KinematicEnsemble{
        cfg.scenario.dims, cfg.scenario.nodes, mds.X_hat, {}, cfg.ranging.T0})["X"];
    if (cfg.estimation.has("LLS") && cfg.estimation.immobile_nodes.size() >= 2 &&
        cfg.ranging.order_L >= 2) {
      auto [c, d] =
          immobility_constraints(cfg.estimation.immobile_nodes, cfg.scenario.dims,
                                 cfg.scenario.nodes);
      const MeasurementMatrix bm1 = build_measurement_matrix(1, grams, {});
      LyapunovSystem sys = build_lyapunov_system(mds.X_hat, bm1);
      sys.constraint_lhs = vstack(sys.constraint_lhs, c);
      sys.constraint_rhs = vcat(sys.constraint_rhs, d);
      const KinematicEstimate est = lls(sys, 1);
      result["Y1_hat_relative"] = ensemble_to_json(KinematicEnsemble{
          cfg.scenario.dims, cfg.scenario.nodes, est.Y_hat, {}, cfg.ranging.T0})["X"];
    }
  }
  std::ofstream out(out_dir + "/estimates.json");
  out << result.dump(2) << "\n";
  std::cout << "wrote " << out_dir << "/range_params.csv\n";
  return 0;
}

int cmd_bounds(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg = load_config(config_path);
  if (cfg.ranging.sigma_m <= 0)
    throw ConfigError("bounds: sigma_m must be positive");
  ensure_dir(out_dir);
  const detail::SweepOracle o = detail::make_oracle(cfg);
  const Index n = cfg.scenario.nodes, p = cfg.scenario.dims;
  const double nbar = static_cast<double>(pair_count(n));
  std::vector<BoundRecord> records;
  auto value = [](const Matrix& m, double n_z) {
    return m.size() == 0 ? 0.0 : std::sqrt(m.trace()) / n_z;
  };
  records.push_back({"r", 0, "unconstrained", value(o.crb.Sigma_r, nbar)});
  if (o.crb.Sigma_rdot.size() > 0)
    records.push_back({"rdot", 1, "unconstrained", value(o.crb.Sigma_rdot, nbar)});
  if (o.crb.Sigma_rddot.size() > 0)
    records.push_back({"rddot", 2, "unconstrained", value(o.crb.Sigma_rddot, nbar)});
  records.push_back({"position", 0, "unconstrained",
                     value(o.sigma_x, static_cast<double>(n * p))});
  const char* names[] = {"velocity", "acceleration"};
  for (std::size_t m = 0; m < o.rel_crb.size(); ++m) {
    records.push_back({std::string("relative_") + names[m], static_cast<Index>(m + 1),
                       "unconstrained",
                       value(o.rel_crb[m].unconstrained, static_cast<double>(n * p))});
    if (o.rel_crb[m].constrained.size() > 0)
      records.push_back({std::string("relative_") + names[m], static_cast<Index>(m + 1),
                         "constrained",
                         value(o.rel_crb[m].constrained, static_cast<double>(n * p))});
  }
  for (std::size_t m = 0; m < o.abs_crb.size(); ++m) {
    records.push_back({std::string("absolute_") + names[m], static_cast<Index>(m + 1),
                       "unconstrained",
                       value(o.abs_crb[m].unconstrained, static_cast<double>(n * p))});
    if (o.abs_crb[m].constrained.size() > 0)
      records.push_back({std::string("absolute_") + names[m], static_cast<Index>(m + 1),
                         "constrained",
                         value(o.abs_crb[m].constrained, static_cast<double>(n * p))});
  }
  save_bounds(records, out_dir + "/bounds.csv");
  std::cout << "wrote " << out_dir << "/bounds.csv (" << records.size() << " rows)\n";
  return 0;
}

int cmd_montecarlo(const std::string& config_path, const std::string& preset,
                   const std::string& out_dir, Index trials, std::uint64_t seed,
                   bool seed_set, Index threads) {
  ExperimentConfig cfg;
  if (!preset.empty())
    cfg = preset_config(preset);
  else if (!config_path.empty())
    cfg = load_config(config_path);
  else
    throw ConfigError("montecarlo: provide --config or --preset");
  if (trials > 0) cfg.montecarlo.trials = trials;
  if (seed_set) cfg.montecarlo.master_seed = seed;
  if (threads < 1)
    threads = static_cast<Index>(std::max(1u, std::thread::hardware_concurrency()));
  const ExperimentReport report = run_monte_carlo(cfg, threads);
  emit_report(report, out_dir, cfg.report.emit_plots);
  std::cout << "wrote " << out_dir << "/results.csv (" << report.rows.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network kinematics estimation from time-varying pairwise ranges"};
  app.require_subcommand(1);

  std::string config_path, timestamps_csv, out_dir = "out", preset;
  std::uint64_t seed = 0;
  bool seed_set = false;
  long long trials = 0, threads = 0;

  auto* sim = app.add_subcommand("simulate", "Generate two-way-ranging timestamps");
  sim->add_option("--config", config_path, "Experiment config JSON")->required();
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--seed", seed, "Noise seed (timestamp-noise mode)");

  auto* est = app.add_subcommand("estimate", "Estimate kinematics from a timestamp log");
  est->add_option("--config", config_path, "Experiment config JSON")->required();
  est->add_option("--timestamps", timestamps_csv, "Timestamp CSV")->required();
  est->add_option("--out", out_dir, "Output directory");
  est->add_option("--seed", seed, "Noise seed (delay-noise mode)");

  auto* bnd = app.add_subcommand("bounds", "Compute lower bounds for a configuration");
  bnd->add_option("--config", config_path, "Experiment config JSON")->required();
  bnd->add_option("--out", out_dir, "Output directory");

  auto* mc = app.add_subcommand("montecarlo", "Run a Monte-Carlo sweep");
  mc->add_option("--config", config_path, "Experiment config JSON");
  mc->add_option("--preset", preset, "Named preset (fig2..fig6)");
  mc->add_option("--out", out_dir, "Output directory");
  mc->add_option("--trials", trials, "Override trial count");
  mc->add_option("--seed", seed, "Override master seed")->each([&](const std::string&) {
    seed_set = true;
  });
  mc->add_option("--threads", threads, "Worker threads (default: hardware)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, seed);
    if (est->parsed()) return cmd_estimate(config_path, timestamps_csv, out_dir, seed);
    if (bnd->parsed()) return cmd_bounds(config_path, out_dir);
    if (mc->parsed())
      return cmd_montecarlo(config_path, preset, out_dir, static_cast<kinemds::Index>(trials),
                            seed, seed_set, static_cast<kinemds::Index>(threads));
  } catch (const kinemds::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const kinemds::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
