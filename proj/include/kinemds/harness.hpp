#ifndef KINEMDS_HARNESS_HPP
#define KINEMDS_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kinemds/abs_kinematics.hpp"
#include "kinemds/bounds.hpp"
#include "kinemds/gtwr.hpp"
#include "kinemds/ranging.hpp"
#include "kinemds/rel_kinematics.hpp"
#include "kinemds/rel_position.hpp"
#include "kinemds/rng.hpp"
#include "kinemds/scenario.hpp"

namespace kinemds {

struct RangingConfig {
  Index K = 10;
  double interval_start = -0.5;  // seconds
  double interval_end = 0.5;
  double sigma_m = 0.1;  // meters
  Index order_L = 3;
  double T0 = 0.0;
  DelayModel delay_model = DelayModel::Geometric;
  std::string noise_mode = "delay";  // "delay" | "timestamp"
  double c = kSpeedOfLight;
};

struct EstimationConfig {
  Index max_order = 2;                  // highest kinematic order M
  std::vector<std::string> estimators;  // subset of MDS, LMDS, LLS, WLLS, GLLS, WGLLS
  std::vector<Index> immobile_nodes;    // relative constraint set (0-based)
  std::vector<Index> anchored_nodes;    // absolute anchors, valued from the scenario truth

  bool has(const std::string& name) const {
    return std::find(estimators.begin(), estimators.end(), name) != estimators.end();
  }
};

struct SweepSpec {
  std::string parameter = "none";  // "none" | "K" | "sigma_m" | "n_constraints"
  std::vector<double> values = {0.0};
};

struct MonteCarloConfig {
  Index trials = 100;
  std::uint64_t master_seed = 20240817;
  SweepSpec sweep;
};

struct ReportConfig {
  std::string output_dir = "out";
  bool emit_plots = false;
  double rmse_normalization = 0.0;  // N_z; 0 = vector length of each quantity
};

struct ExperimentConfig {
  KinematicEnsemble scenario;
  RangingConfig ranging;
  EstimationConfig estimation;
  MonteCarloConfig montecarlo;
  ReportConfig report;
  std::vector<double> trajectory_times;

  void validate() const {
    scenario.validate();
    if (ranging.K < 1) throw ConfigError("config: K must be >= 1");
    if (ranging.order_L < 1 || ranging.order_L > 3)
      throw ConfigError("config: ranging order must be in [1,3]");
    if (ranging.sigma_m < 0) throw ConfigError("config: sigma_m must be >= 0");
    if (ranging.interval_start >= ranging.interval_end)
      throw ConfigError("config: empty measurement interval");
    if (ranging.noise_mode != "delay" && ranging.noise_mode != "timestamp")
      throw ConfigError("config: noise_mode must be 'delay' or 'timestamp'");
    if (montecarlo.trials < 1) throw ConfigError("config: trials must be >= 1");
    const auto& sweep = montecarlo.sweep;
    if (sweep.parameter != "none" && sweep.parameter != "K" && sweep.parameter != "sigma_m" &&
        sweep.parameter != "n_constraints")
      throw ConfigError("config: unknown sweep parameter '" + sweep.parameter + "'");
    if (sweep.values.empty()) throw ConfigError("config: empty sweep value list");
    if (sweep.parameter == "K")
      for (double v : sweep.values)
        if (v < static_cast<double>(ranging.order_L))
          throw ConfigError("config: swept K below the ranging order");
    if (sweep.parameter != "none" && !trajectory_times.empty())
      throw ConfigError("config: trajectory evaluation requires sweep parameter 'none'");
    for (const auto& name : estimation.estimators)
      if (name != "MDS" && name != "LMDS" && name != "LLS" && name != "WLLS" && name != "GLLS" &&
          name != "WGLLS")
        throw ConfigError("config: unknown estimator '" + name + "'");
    if (!estimation.estimators.empty() && ranging.order_L < 2 &&
        (estimation.has("LLS") || estimation.has("GLLS") || estimation.has("LMDS")))
      throw ConfigError("config: kinematic estimation needs ranging order >= 2");
    if (estimation.has("WLLS") && !estimation.has("LLS"))
      throw ConfigError("config: WLLS requires the LLS pass");
    if (estimation.has("WGLLS") && !estimation.has("GLLS"))
      throw ConfigError("config: WGLLS requires the GLLS pass");
    for (const auto& name : {"LMDS", "LLS", "GLLS"})
      if (estimation.has(name) && !estimation.has("MDS"))
        throw ConfigError(std::string("config: ") + name + " requires the MDS pass");
    if (estimation.has("LLS") && estimation.immobile_nodes.size() < 2 &&
        montecarlo.sweep.parameter != "n_constraints")
      throw ConfigError("config: LLS requires at least two immobile nodes");
    if (estimation.has("GLLS") && estimation.anchored_nodes.empty() &&
        montecarlo.sweep.parameter != "n_constraints")
      throw ConfigError("config: GLLS requires anchored nodes");
    if (estimation.max_order < 1 || estimation.max_order > 2)
      throw ConfigError("config: max_order must be 1 or 2");
  }
};

// -------- config (de)serialization --------

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["scenario"] = ensemble_to_json(c.scenario);
  j["ranging"] = {{"K", c.ranging.K},
                  {"interval", {c.ranging.interval_start, c.ranging.interval_end}},
                  {"sigma_m", c.ranging.sigma_m},
                  {"order_L", c.ranging.order_L},
                  {"T0", c.ranging.T0},
                  {"delay_model", c.ranging.delay_model == DelayModel::Geometric
                                      ? "geometric"
                                      : "polynomial_truncated"},
                  {"noise_mode", c.ranging.noise_mode},
                  {"c", c.ranging.c}};
  j["estimation"] = {{"max_order_M", c.estimation.max_order},
                     {"estimators", c.estimation.estimators},
                     {"immobile_nodes", c.estimation.immobile_nodes},
                     {"anchored_nodes", c.estimation.anchored_nodes}};
  j["montecarlo"] = {{"trials", c.montecarlo.trials},
                     {"master_seed", c.montecarlo.master_seed},
                     {"sweep",
                      {{"parameter", c.montecarlo.sweep.parameter},
                       {"values", c.montecarlo.sweep.values}}}};
  j["report"] = {{"output_dir", c.report.output_dir},
                 {"emit_plots", c.report.emit_plots},
                 {"rmse_normalization", c.report.rmse_normalization}};
  j["trajectory_times"] = c.trajectory_times;
  return j;
}

/// Parses an ExperimentConfig; "scenario" may be an inline object or a file
/// path (resolved against base_dir).
inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         const std::string& base_dir = ".") {
  ExperimentConfig c;
  try {
    const auto& sc = j.at("scenario");
    if (sc.is_string()) {
      std::filesystem::path p = sc.get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      c.scenario = load_scenario(p.string());
    } else {
      c.scenario = ensemble_from_json(sc);
    }
    if (j.contains("ranging")) {
      const auto& r = j["ranging"];
      c.ranging.K = r.value("K", c.ranging.K);
      if (r.contains("interval")) {
        c.ranging.interval_start = r["interval"].at(0).get<double>();
        c.ranging.interval_end = r["interval"].at(1).get<double>();
      }
      c.ranging.sigma_m = r.value("sigma_m", c.ranging.sigma_m);
      c.ranging.order_L = r.value("order_L", c.ranging.order_L);
      c.ranging.T0 = r.value("T0", c.ranging.T0);
      const std::string model = r.value("delay_model", "geometric");
      if (model == "geometric")
        c.ranging.delay_model = DelayModel::Geometric;
      else if (model == "polynomial_truncated")
        c.ranging.delay_model = DelayModel::PolynomialTruncated;
      else
        throw ConfigError("config: unknown delay_model '" + model + "'");
      c.ranging.noise_mode = r.value("noise_mode", c.ranging.noise_mode);
      c.ranging.c = r.value("c", c.ranging.c);
    }
    if (j.contains("estimation")) {
      const auto& e = j["estimation"];
      c.estimation.max_order = e.value("max_order_M", c.estimation.max_order);
      c.estimation.estimators =
          e.value("estimators", std::vector<std::string>{});
      for (Index node : e.value("immobile_nodes", std::vector<Index>{}))
        c.estimation.immobile_nodes.push_back(node);
      for (Index node : e.value("anchored_nodes", std::vector<Index>{}))
        c.estimation.anchored_nodes.push_back(node);
    }
    if (j.contains("montecarlo")) {
      const auto& m = j["montecarlo"];
      c.montecarlo.trials = m.value("trials", c.montecarlo.trials);
      c.montecarlo.master_seed = m.value("master_seed", c.montecarlo.master_seed);
      if (m.contains("sweep")) {
        c.montecarlo.sweep.parameter = m["sweep"].value("parameter", "none");
        c.montecarlo.sweep.values =
            m["sweep"].value("values", std::vector<double>{0.0});
      }
    }
    if (j.contains("report")) {
      const auto& r = j["report"];
      c.report.output_dir = r.value("output_dir", c.report.output_dir);
      c.report.emit_plots = r.value("emit_plots", c.report.emit_plots);
      c.report.rmse_normalization =
          r.value("rmse_normalization", c.report.rmse_normalization);
    }
    c.trajectory_times = j.value("trajectory_times", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config JSON: " + std::string(e.what()));
  }
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

// -------- RMSE --------

/// RMSE = N_z^-1 sqrt(N_exp^-1 sum ||zhat - z||^2).
inline double rmse_from_sum(double sum_sq, Index n_exp, double n_z) {
  if (n_exp < 1) throw ConfigError("rmse: need at least one experiment");
  if (n_z <= 0) throw ConfigError("rmse: N_z must be positive");
  return std::sqrt(sum_sq / static_cast<double>(n_exp)) / n_z;
}

inline double rmse(const std::vector<Vector>& estimates, const Vector& truth,
                   double n_z = 0.0) {
  if (estimates.empty()) throw ConfigError("rmse: empty estimate list");
  double sum = 0.0;
  for (const auto& z : estimates) {
    if (z.size() != truth.size()) throw ConfigError("rmse: estimate length mismatch");
    sum += (z - truth).squaredNorm();
  }
  return rmse_from_sum(sum, static_cast<Index>(estimates.size()),
                       n_z > 0 ? n_z : static_cast<double>(truth.size()));
}

// -------- report types --------

struct ReportRow {
  double sweep_value = 0.0;
  std::string estimator;
  std::string quantity;  // r, rdot, rddot, X, Y1, Y2, S_rel, S_abs
  double rmse = 0.0;
  double rcrb_constrained = 0.0;    // 0 when not applicable
  double rcrb_unconstrained = 0.0;  // 0 when not applicable
  Index trials = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  nlohmann::json config_echo;
  std::vector<std::pair<double, double>> wallclock;  // (sweep value, seconds)
};

namespace detail {

inline ExperimentConfig apply_sweep(const ExperimentConfig& base, const std::string& parameter,
                                    double value) {
  ExperimentConfig c = base;
  if (parameter == "K") {
    c.ranging.K = static_cast<Index>(value);
  } else if (parameter == "sigma_m") {
    c.ranging.sigma_m = value;
  } else if (parameter == "n_constraints") {
    const Index count = static_cast<Index>(value);
    if (count < 1 || count > c.scenario.nodes)
      throw ConfigError("sweep: constraint count out of range");
    c.estimation.immobile_nodes.clear();
    c.estimation.anchored_nodes.clear();
    for (Index i = 0; i < count; ++i) {
      c.estimation.immobile_nodes.push_back(i);
      c.estimation.anchored_nodes.push_back(i);
    }
  }
  return c;
}

/// Truth-side quantities and bounds, fixed per sweep point.
struct SweepOracle {
  RelativeState rel;
  RangeParameterSet params;  // truth range parameters, L levels
  TimestampTable base;       // noiseless timestamps
  Matrix c_imm;              // immobility constraints (0 rows if none)
  Vector d_imm;
  std::vector<std::pair<Matrix, Vector>> anchors;  // per order M
  bool have_bounds = false;
  RangeCrb crb;
  Matrix sigma_x;                               // NP x NP position CRB
  std::vector<KinematicCrb> rel_crb, abs_crb;   // index M-1
};

inline SweepOracle make_oracle(const ExperimentConfig& cfg) {
  const auto& e = cfg.scenario;
  SweepOracle o;
  o.rel = relative_state(e);
  const Index L = cfg.ranging.order_L;
  o.params = range_derivative_oracle(e, L - 1);
  o.base = generate_timestamps(e, cfg.ranging.K,
                               {cfg.ranging.interval_start, cfg.ranging.interval_end},
                               cfg.ranging.T0, cfg.ranging.delay_model, L, cfg.ranging.c);

  const Index p = e.dims, n = e.nodes;
  const bool relative_solvers =
      cfg.estimation.has("LLS") || cfg.estimation.has("WLLS") || cfg.estimation.has("LMDS");
  const bool absolute_solvers = cfg.estimation.has("GLLS") || cfg.estimation.has("WGLLS");
  if (relative_solvers && cfg.estimation.immobile_nodes.size() >= 2) {
    auto [c, d] = immobility_constraints(cfg.estimation.immobile_nodes, p, n);
    o.c_imm = std::move(c);
    o.d_imm = std::move(d);
  } else {
    o.c_imm = Matrix::Zero(0, n * p);
    o.d_imm = Vector::Zero(0);
  }
  if (absolute_solvers) {
    for (Index m = 1; m <= cfg.estimation.max_order; ++m) {
      const Matrix& y_true = e.derivatives.at(static_cast<std::size_t>(m - 1));
      o.anchors.push_back(
          anchor_constraints(anchor_nodes(cfg.estimation.anchored_nodes, y_true), p, n));
    }
  }

  if (cfg.ranging.sigma_m <= 0.0) return o;  // noiseless: no finite CRBs
  o.have_bounds = true;
  const auto [v, tau] = build_vandermonde(o.base, L);
  (void)tau;
  const double tau_var = (cfg.ranging.sigma_m / cfg.ranging.c) *
                         (cfg.ranging.sigma_m / cfg.ranging.c);
  o.crb = crb_range(v, tau_var, L, cfg.ranging.c);
  o.sigma_x = crb_position(o.rel.X_rel, o.crb.Sigma_r);

  const Matrix a_rel = sensitivity_design(o.rel.X_rel, false);  // = A with X in place of Y
  const Matrix a_abs = sensitivity_design(o.rel.X_rel, true);
  Matrix sigma_xdot_rel, sigma_xdot_abs;
  Matrix a_y1_rel, a_y1_abs;
  for (Index m = 1; m <= cfg.estimation.max_order; ++m) {
    if (static_cast<std::size_t>(m) > e.derivatives.size()) break;
    if (m == 2 && L < 3) break;  // no acceleration observable without the R-ddot fit
    const Matrix& ybar = o.rel.derivatives_rel[static_cast<std::size_t>(m - 1)];
    const Matrix& yabs = e.derivatives[static_cast<std::size_t>(m - 1)];
    if (relative_solvers) {
      Matrix sigma_b =
          m == 1 ? covariance_b(1, o.params, o.crb)
                 : covariance_b(2, o.params, o.crb, a_y1_rel, sigma_xdot_rel);
      const Matrix a_y = sensitivity_design(ybar, false);
      const Matrix sigma_rho = covariance_rho(a_y, o.sigma_x, sigma_b);
      const Matrix c_rel = vstack(centering_constraints(p, n), o.c_imm);
      o.rel_crb.push_back(crb_kinematics(a_rel, sigma_rho, m, c_rel));
      if (m == 1) {
        a_y1_rel = a_y;
        sigma_xdot_rel = o.rel_crb.back().constrained;
      }
    }
    if (absolute_solvers) {
      Matrix sigma_b =
          m == 1 ? covariance_b(1, o.params, o.crb)
                 : covariance_b(2, o.params, o.crb, a_y1_abs, sigma_xdot_abs);
      const Matrix a_y = sensitivity_design(yabs, true);
      const Matrix sigma_rho = covariance_rho(a_y, o.sigma_x, sigma_b);
      o.abs_crb.push_back(
          crb_kinematics(a_abs, sigma_rho, m, o.anchors[static_cast<std::size_t>(m - 1)].first));
      if (m == 1) {
        a_y1_abs = a_y;
        sigma_xdot_abs = o.abs_crb.back().constrained;
      }
    }
  }
  return o;
}

/// Squared-error contributions of one trial, keyed "estimator|quantity"
/// (trajectory entries keyed "estimator|S_rel@<index>").
using TrialErrors = std::map<std::string, double>;

inline Matrix weight_or_identity(const Matrix& sigma_rho) {
  const Matrix w = pseudo_inverse(sigma_rho);
  if (w.norm() == 0.0) {
    std::cerr << "weighting: degenerate covariance, falling back to identity\n";
    return Matrix::Identity(w.rows(), w.cols());
  }
  return w;
}

inline TrialErrors run_trial(const ExperimentConfig& cfg, const SweepOracle& o,
                             std::uint64_t seed) {
  TrialErrors sq;
  const auto& e = cfg.scenario;
  const Index p = e.dims, n = e.nodes;
  const Index L = cfg.ranging.order_L;

  TimestampTable t = o.base;
  DelayMeasurements meas;
  if (cfg.ranging.noise_mode == "timestamp") {
    t = perturb_timestamps(t, cfg.ranging.sigma_m, seed);
    meas = measure_delays(t, 0.0, 0);
    meas.noise_variance = (cfg.ranging.sigma_m / t.c) * (cfg.ranging.sigma_m / t.c);
  } else {
    meas = measure_delays(t, cfg.ranging.sigma_m, seed);
  }

  const RangeParameterSet params = dynamic_ranging(t, meas.tau, L);
  sq["ranging|r"] = (params.r - o.params.r).squaredNorm();
  if (L >= 2) sq["ranging|rdot"] = (params.rdot - o.params.rdot).squaredNorm();
  if (L >= 3) sq["ranging|rddot"] = (params.rddot - o.params.rddot).squaredNorm();

  if (!cfg.estimation.has("MDS")) return sq;
  const CenteredGramSet grams = build_centered_grams(params);
  const PositionEstimate mds = mds_position(grams.B0, p);
  auto [x_aligned, q] = procrustes_align(mds.X_hat, o.rel.X_rel);
  (void)q;
  sq["MDS|X"] = (x_aligned - o.rel.X_rel).squaredNorm();

  const bool order2 = cfg.estimation.max_order >= 2 && L >= 3 && e.derivatives.size() >= 2;
  const Matrix pc = centering_matrix(n);

  MeasurementMatrix bm1;
  if (cfg.estimation.has("LLS") || cfg.estimation.has("GLLS") || cfg.estimation.has("LMDS"))
    bm1 = build_measurement_matrix(1, grams, {});

  // Relative chain.
  KinematicEstimate lls1, lls2;
  LyapunovSystem sys1;
  Matrix sigma_x_hat, sigma_rho1_hat;
  if (cfg.estimation.has("LLS")) {
    sys1 = build_lyapunov_system(x_aligned, bm1);
    sys1.constraint_lhs = vstack(sys1.constraint_lhs, o.c_imm);
    sys1.constraint_rhs = vcat(sys1.constraint_rhs, o.d_imm);
    lls1 = lls(sys1, 1);
    sq["LLS|Y1"] = (lls1.Y_hat - o.rel.derivatives_rel[0]).squaredNorm();
    if (order2) {
      const MeasurementMatrix bm2 = build_measurement_matrix(2, grams, {lls1.Y_hat});
      LyapunovSystem sys2 = build_lyapunov_system(x_aligned, bm2);
      sys2.constraint_lhs = sys1.constraint_lhs;
      sys2.constraint_rhs = sys1.constraint_rhs;
      lls2 = lls(sys2, 2);
      sq["LLS|Y2"] = (lls2.Y_hat - o.rel.derivatives_rel[1]).squaredNorm();
    }
  }
  KinematicEstimate wlls1, wlls2;
  if (cfg.estimation.has("WLLS")) {
    if (!o.have_bounds) {
      // Degenerate noiseless case: BLUE weight reduces to identity.
      wlls1 = lls1;
      sq["WLLS|Y1"] = sq["LLS|Y1"];
      if (order2) {
        wlls2 = lls2;
        sq["WLLS|Y2"] = sq["LLS|Y2"];
      }
    } else {
      sigma_x_hat = crb_position(x_aligned, o.crb.Sigma_r);
      const Matrix a_y1 = sensitivity_design(lls1.Y_hat, false);
      const Matrix sigma_b1 = covariance_b(1, params, o.crb);
      sigma_rho1_hat = covariance_rho(a_y1, sigma_x_hat, sigma_b1);
      LyapunovSystem sysw = sys1;
      sysw.weight = weight_or_identity(sigma_rho1_hat);
      wlls1 = wlls(sysw, 1);
      sq["WLLS|Y1"] = (wlls1.Y_hat - o.rel.derivatives_rel[0]).squaredNorm();
      if (order2) {
        const KinematicCrb k1 = crb_kinematics(sys1.A, sigma_rho1_hat, 1, sys1.constraint_lhs);
        const Matrix sigma_xdot = k1.constrained;
        const Matrix sigma_b2 = covariance_b(2, params, o.crb, a_y1, sigma_xdot);
        const Matrix a_y2 = sensitivity_design(lls2.Y_hat, false);
        const MeasurementMatrix bm2w = build_measurement_matrix(2, grams, {wlls1.Y_hat});
        LyapunovSystem sysw2 = build_lyapunov_system(x_aligned, bm2w);
        sysw2.constraint_lhs = sys1.constraint_lhs;
        sysw2.constraint_rhs = sys1.constraint_rhs;
        sysw2.weight = weight_or_identity(covariance_rho(a_y2, sigma_x_hat, sigma_b2));
        wlls2 = wlls(sysw2, 2);
        sq["WLLS|Y2"] = (wlls2.Y_hat - o.rel.derivatives_rel[1]).squaredNorm();
      }
    }
  }
  if (cfg.estimation.has("LMDS")) {
    // Constant-velocity eigendecomposition path; needs the R-ddot fit.
    CenteredGramSet gl = grams;
    if (L < 3) gl = build_centered_grams(dynamic_ranging(t, meas.tau, 3));
    const Matrix y_tilde = lmds_velocity(gl.B2, p);
    const Matrix h = estimate_rotation(gl.B1, x_aligned, y_tilde);
    sq["LMDS|Y1"] = (h * y_tilde - o.rel.derivatives_rel[0]).squaredNorm();
  }

  // Absolute chain.
  KinematicEstimate glls1, glls2;
  GeneralizedSystem gsys1;
  if (cfg.estimation.has("GLLS")) {
    gsys1 = build_generalized_system(x_aligned, bm1);
    gsys1.constraint_lhs = o.anchors[0].first;
    gsys1.constraint_rhs = o.anchors[0].second;
    glls1 = glls(gsys1, 1);
    sq["GLLS|Y1"] = (glls1.Y_hat - e.derivatives[0]).squaredNorm();
    if (order2) {
      const MeasurementMatrix bm2 = build_measurement_matrix(2, grams, {glls1.Y_hat * pc});
      GeneralizedSystem gsys2 = build_generalized_system(x_aligned, bm2);
      gsys2.constraint_lhs = o.anchors[1].first;
      gsys2.constraint_rhs = o.anchors[1].second;
      glls2 = glls(gsys2, 2);
      sq["GLLS|Y2"] = (glls2.Y_hat - e.derivatives[1]).squaredNorm();
    }
  }
  KinematicEstimate wglls1, wglls2;
  if (cfg.estimation.has("WGLLS")) {
    if (!o.have_bounds) {
      wglls1 = glls1;
      sq["WGLLS|Y1"] = sq["GLLS|Y1"];
      if (order2) {
        wglls2 = glls2;
        sq["WGLLS|Y2"] = sq["GLLS|Y2"];
      }
    } else {
      if (sigma_x_hat.size() == 0) sigma_x_hat = crb_position(x_aligned, o.crb.Sigma_r);
      const Matrix a_y1 = sensitivity_design(glls1.Y_hat, true);
      const Matrix sigma_b1 = covariance_b(1, params, o.crb);
      const Matrix sigma_rho1 = covariance_rho(a_y1, sigma_x_hat, sigma_b1);
      GeneralizedSystem gsw = gsys1;
      gsw.weight = weight_or_identity(sigma_rho1);
      wglls1 = wglls(gsw, 1);
      sq["WGLLS|Y1"] = (wglls1.Y_hat - e.derivatives[0]).squaredNorm();
      if (order2) {
        const KinematicCrb k1 = crb_kinematics(gsys1.A, sigma_rho1, 1, o.anchors[0].first);
        const Matrix sigma_b2 = covariance_b(2, params, o.crb, a_y1, k1.constrained);
        const Matrix a_y2 = sensitivity_design(glls2.Y_hat, true);
        const MeasurementMatrix bm2w = build_measurement_matrix(2, grams, {wglls1.Y_hat * pc});
        GeneralizedSystem gsw2 = build_generalized_system(x_aligned, bm2w);
        gsw2.constraint_lhs = o.anchors[1].first;
        gsw2.constraint_rhs = o.anchors[1].second;
        gsw2.weight = weight_or_identity(covariance_rho(a_y2, sigma_x_hat, sigma_b2));
        wglls2 = wglls(gsw2, 2);
        sq["WGLLS|Y2"] = (wglls2.Y_hat - e.derivatives[1]).squaredNorm();
      }
    }
  }

  // Trajectory reconstruction at the requested instants.
  if (!cfg.trajectory_times.empty()) {
    const bool use_w = cfg.estimation.has("WLLS");
    const bool use_wg = cfg.estimation.has("WGLLS");
    std::vector<Matrix> rel_est, abs_est;
    if (cfg.estimation.has("LLS")) {
      rel_est.push_back(use_w && o.have_bounds ? wlls1.Y_hat : lls1.Y_hat);
      if (order2) rel_est.push_back(use_w && o.have_bounds ? wlls2.Y_hat : lls2.Y_hat);
    }
    if (cfg.estimation.has("GLLS")) {
      abs_est.push_back(use_wg && o.have_bounds ? wglls1.Y_hat : glls1.Y_hat);
      if (order2) abs_est.push_back(use_wg && o.have_bounds ? wglls2.Y_hat : glls2.Y_hat);
    }
    for (std::size_t ti = 0; ti < cfg.trajectory_times.size(); ++ti) {
      const double time = cfg.trajectory_times[ti];
      if (!rel_est.empty()) {
        const Matrix truth = evaluate_trajectory(e, time) * pc;
        const Matrix est = reconstruct_trajectory(x_aligned, rel_est, time, e.t0);
        sq[(use_w ? std::string("WLLS") : std::string("LLS")) + "|S_rel@" +
           std::to_string(ti)] = (est - truth).squaredNorm();
      }
      if (!abs_est.empty()) {
        // Absolute kinematics on the relative initial position: the truth
        // carries the centered X with the absolute derivatives.
        Matrix truth = o.rel.X_rel;
        double power = 1.0, factorial = 1.0;
        for (std::size_t m = 0; m < e.derivatives.size(); ++m) {
          power *= (time - e.t0);
          factorial *= static_cast<double>(m + 1);
          truth += (power / factorial) * e.derivatives[m];
        }
        const Matrix est = reconstruct_trajectory(x_aligned, abs_est, time, e.t0);
        sq[(use_wg ? std::string("WGLLS") : std::string("GLLS")) + "|S_abs@" +
           std::to_string(ti)] = (est - truth).squaredNorm();
      }
    }
  }
  return sq;
}

inline const std::vector<std::string>& estimator_order() {
  static const std::vector<std::string> order = {"ranging", "MDS",  "LMDS", "LLS",
                                                 "WLLS",    "GLLS", "WGLLS"};
  return order;
}

inline const std::vector<std::string>& quantity_order() {
  static const std::vector<std::string> order = {"r", "rdot", "rddot", "X", "Y1", "Y2"};
  return order;
}

}  // namespace detail

/// Deterministic Monte-Carlo sweep. Trial substreams depend only on
/// (master seed, sweep index, trial index), so results are independent of
/// the thread count.
inline ExperimentReport run_monte_carlo(const ExperimentConfig& cfg, Index threads = 1) {
  cfg.validate();
  if (threads < 1) threads = 1;
  ExperimentReport report;
  report.config_echo = config_to_json(cfg);

  const auto& sweep = cfg.montecarlo.sweep;
  for (std::size_t si = 0; si < sweep.values.size(); ++si) {
    const auto t_start = std::chrono::steady_clock::now();
    const ExperimentConfig c = detail::apply_sweep(cfg, sweep.parameter, sweep.values[si]);
    c.validate();
    const detail::SweepOracle oracle = detail::make_oracle(c);

    const Index trials = c.montecarlo.trials;
    std::vector<detail::TrialErrors> results(static_cast<std::size_t>(trials));
    std::atomic<Index> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
      while (true) {
        const Index trial = next.fetch_add(1);
        if (trial >= trials) return;
        try {
          const std::uint64_t seed = rng::mix(
              rng::mix(c.montecarlo.master_seed, static_cast<std::uint64_t>(si)),
              static_cast<std::uint64_t>(trial));
          results[static_cast<std::size_t>(trial)] = detail::run_trial(c, oracle, seed);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (Index w = 0; w < threads; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Fixed-order reduction keeps the floating-point sums schedule-independent.
    detail::TrialErrors sums;
    for (const auto& r : results)
      for (const auto& [key, value] : r) sums[key] += value;

    const Index n = c.scenario.nodes, p = c.scenario.dims;
    const Index nbar = pair_count(n);
    auto n_z = [&](Index len) {
      return c.report.rmse_normalization > 0 ? c.report.rmse_normalization
                                             : static_cast<double>(len);
    };
    auto bound_value = [&](const Matrix& m, Index len) {
      return m.size() == 0 ? 0.0 : std::sqrt(m.trace()) / n_z(len);
    };
    for (const auto& est : detail::estimator_order())
      for (const auto& qty : detail::quantity_order()) {
        const auto it = sums.find(est + "|" + qty);
        if (it == sums.end()) continue;
        ReportRow row;
        row.sweep_value = sweep.values[si];
        row.estimator = est;
        row.quantity = qty;
        row.trials = trials;
        const Index len = (qty == "r" || qty == "rdot" || qty == "rddot") ? nbar : n * p;
        row.rmse = rmse_from_sum(it->second, trials, n_z(len));
        if (oracle.have_bounds) {
          if (est == "ranging") {
            const Matrix& b = qty == "r" ? oracle.crb.Sigma_r
                              : qty == "rdot" ? oracle.crb.Sigma_rdot
                                              : oracle.crb.Sigma_rddot;
            row.rcrb_unconstrained = row.rcrb_constrained = bound_value(b, len);
          } else if (est == "MDS") {
            row.rcrb_unconstrained = row.rcrb_constrained = bound_value(oracle.sigma_x, len);
          } else if (est == "GLLS" || est == "WGLLS") {
            const Index m = qty == "Y1" ? 1 : 2;
            if (static_cast<std::size_t>(m) <= oracle.abs_crb.size()) {
              const auto& k = oracle.abs_crb[static_cast<std::size_t>(m - 1)];
              row.rcrb_unconstrained = bound_value(k.unconstrained, len);
              row.rcrb_constrained = bound_value(k.constrained, len);
            }
          } else {  // LMDS / LLS / WLLS share the relative bound
            const Index m = qty == "Y1" ? 1 : 2;
            if (static_cast<std::size_t>(m) <= oracle.rel_crb.size()) {
              const auto& k = oracle.rel_crb[static_cast<std::size_t>(m - 1)];
              row.rcrb_unconstrained = bound_value(k.unconstrained, len);
              row.rcrb_constrained = bound_value(
                  k.constrained.size() > 0 ? k.constrained : k.unconstrained, len);
            }
          }
        }
        report.rows.push_back(std::move(row));
      }
    // Trajectory rows, keyed by the evaluation instant.
    for (std::size_t ti = 0; ti < cfg.trajectory_times.size(); ++ti)
      for (const char* kind : {"S_rel", "S_abs"})
        for (const auto& est : detail::estimator_order()) {
          const auto it = sums.find(est + "|" + kind + "@" + std::to_string(ti));
          if (it == sums.end()) continue;
          ReportRow row;
          row.sweep_value = cfg.trajectory_times[ti];
          row.estimator = est;
          row.quantity = kind;
          row.trials = trials;
          row.rmse = rmse_from_sum(it->second, trials, n_z(n * p));
          report.rows.push_back(std::move(row));
        }

    const auto t_end = std::chrono::steady_clock::now();
    report.wallclock.emplace_back(
        sweep.values[si],
        std::chrono::duration<double>(t_end - t_start).count());
  }
  return report;
}

// -------- report emission --------

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// Minimal deterministic line chart (log-y) of RMSE and bound vs sweep value.
inline void write_svg_plot(const std::string& path, const std::string& quantity,
                           const std::vector<ReportRow>& rows) {
  std::vector<const ReportRow*> sel;
  for (const auto& r : rows)
    if (r.quantity == quantity && r.rmse > 0) sel.push_back(&r);
  if (sel.empty()) return;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto* r : sel) {
    xmin = std::min(xmin, r->sweep_value);
    xmax = std::max(xmax, r->sweep_value);
    for (double v : {r->rmse, r->rcrb_constrained})
      if (v > 0) {
        ymin = std::min(ymin, std::log10(v));
        ymax = std::max(ymax, std::log10(v));
      }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double w = 640, h = 420, m = 50;
  auto px = [&](double x) { return m + (x - xmin) / (xmax - xmin) * (w - 2 * m); };
  auto py = [&](double y) { return h - m - (y - ymin) / (ymax - ymin) * (h - 2 * m); };
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << quantity
      << " RMSE (log10) vs sweep value</text>\n";
  const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c",
                                           "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  std::size_t ci = 0;
  for (const auto& est : estimator_order()) {
    std::vector<const ReportRow*> line;
    for (const auto* r : sel)
      if (r->estimator == est) line.push_back(r);
    if (line.empty()) continue;
    const std::string color = colors[ci++ % colors.size()];
    auto polyline = [&](auto value, const char* dash) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" " << dash << " points=\"";
      for (const auto* r : line)
        if (value(r) > 0) out << px(r->sweep_value) << "," << py(std::log10(value(r))) << " ";
      out << "\"/>\n";
    };
    polyline([](const ReportRow* r) { return r->rmse; }, "");
    polyline([](const ReportRow* r) { return r->rcrb_constrained; },
             "stroke-dasharray=\"6 3\"");
    out << "<text x=\"" << w - m + 4 << "\" y=\"" << m + 16 * static_cast<double>(ci)
        << "\" fill=\"" << color << "\" font-size=\"12\">" << est << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace detail

/// Writes results.csv (deterministic bytes), config.echo.json, timings.csv and
/// optional per-quantity SVG charts.
inline void emit_report(const ExperimentReport& report, const std::string& dir,
                        bool emit_plots = false) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());

  {
    std::ofstream out(dir + "/results.csv");
    if (!out) throw ConfigError("cannot write " + dir + "/results.csv");
    out << "sweep_value,estimator,quantity,rmse,rcrb_constrained,rcrb_unconstrained,trials\n";
    for (const auto& r : report.rows)
      out << detail::format_double(r.sweep_value) << "," << r.estimator << "," << r.quantity
          << "," << detail::format_double(r.rmse) << ","
          << detail::format_double(r.rcrb_constrained) << ","
          << detail::format_double(r.rcrb_unconstrained) << "," << r.trials << "\n";
  }
  {
    std::ofstream out(dir + "/config.echo.json");
    if (!out) throw ConfigError("cannot write " + dir + "/config.echo.json");
    out << report.config_echo.dump(2) << "\n";
  }
  {
    // Wallclock lives outside results.csv so the latter stays byte-reproducible.
    std::ofstream out(dir + "/timings.csv");
    if (!out) throw ConfigError("cannot write " + dir + "/timings.csv");
    out << "sweep_value,seconds\n";
    for (const auto& [value, seconds] : report.wallclock)
      out << detail::format_double(value) << "," << detail::format_double(seconds) << "\n";
  }
  if (emit_plots) {
    std::vector<std::string> quantities;
    for (const auto& r : report.rows)
      if (std::find(quantities.begin(), quantities.end(), r.quantity) == quantities.end())
        quantities.push_back(r.quantity);
    for (const auto& q : quantities) {
      std::string safe = q;
      std::replace(safe.begin(), safe.end(), '/', '_');
      detail::write_svg_plot(dir + "/plot_" + safe + ".svg", q, report.rows);
    }
  }
}

// -------- presets --------

/// Named experiment presets for the standard benchmark runs (trials adjustable).
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.scenario = reference_scenario();
  c.ranging.sigma_m = 0.1;
  c.ranging.order_L = 3;
  c.montecarlo.trials = 500;
  if (name == "fig2") {
    c.ranging.delay_model = DelayModel::PolynomialTruncated;
    c.montecarlo.sweep = {"K", {10, 20, 40, 70, 100}};
  } else if (name == "fig3") {
    c.estimation.estimators = {"MDS", "LLS", "WLLS"};
    c.estimation.immobile_nodes = {0, 1};
    c.montecarlo.sweep = {"K", {10, 40, 100}};
  } else if (name == "fig4") {
    c.scenario.derivatives.resize(1);  // constant-velocity motion
    c.ranging.order_L = 2;
    c.estimation.max_order = 1;
    c.estimation.estimators = {"MDS", "LLS", "WLLS", "LMDS"};
    c.estimation.immobile_nodes = {0, 1};
    c.montecarlo.sweep = {"K", {10, 40, 100}};
  } else if (name == "fig5") {
    c.estimation.estimators = {"MDS", "GLLS", "WGLLS"};
    c.estimation.anchored_nodes = {0, 1};
    c.montecarlo.sweep = {"K", {10, 40, 100}};
  } else if (name == "fig6") {
    c.ranging.K = 500;
    c.ranging.sigma_m = 1.0;
    c.estimation.estimators = {"MDS", "LLS", "WLLS", "GLLS", "WGLLS"};
    c.estimation.immobile_nodes = {0, 1};
    c.estimation.anchored_nodes = {0, 1};
    c.montecarlo.trials = 100;
    c.trajectory_times = {-1.0, -0.75, -0.5, -0.25, -0.1, 0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

}  // namespace kinemds

#endif
