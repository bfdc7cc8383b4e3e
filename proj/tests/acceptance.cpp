// Acceptance gate: run as `acceptance <criterion>` with criterion in 1..10.
// Each criterion prints a single PASS/FAIL line (details on indented lines)
// and the process exits 0 on pass, 1 on fail.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "kinemds/harness.hpp"

using namespace kinemds;

namespace {

Index worker_threads() {
  return static_cast<Index>(std::max(2u, std::thread::hardware_concurrency()));
}

bool g_ok = true;

void require(bool cond, const std::string& what) {
  std::printf("  %-6s %s\n", cond ? "ok" : "FAIL", what.c_str());
  if (!cond) g_ok = false;
}

const ReportRow* find_row(const ExperimentReport& r, double sweep, const std::string& est,
                          const std::string& qty) {
  for (const auto& row : r.rows)
    if (row.sweep_value == sweep && row.estimator == est && row.quantity == qty) return &row;
  return nullptr;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

Matrix random_centered(Index p, Index n, std::uint64_t seed) {
  Matrix m(p, n);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < n; ++j)
      m(i, j) = 100.0 * (2.0 * rng::uniform01(rng::mix(seed, static_cast<std::uint64_t>(i * n + j))) - 1.0);
  return m * centering_matrix(n);
}

ExperimentConfig base_config() {
  ExperimentConfig c;
  c.scenario = reference_scenario();
  c.ranging.K = 10;
  c.ranging.sigma_m = 0.1;
  c.ranging.order_L = 3;
  c.ranging.delay_model = DelayModel::PolynomialTruncated;
  return c;
}

// 1. Noiseless end-to-end exactness on truncated polynomial delays.
void criterion_1() {
  const KinematicEnsemble e = reference_scenario();
  const RelativeState rel = relative_state(e);
  const RangeParameterSet oracle = range_derivative_oracle(e, 2);
  const TimestampTable t =
      generate_timestamps(e, 10, {-0.5, 0.5}, 0.0, DelayModel::PolynomialTruncated, 3);
  const Vector tau = measure_delays(t, 0.0, 0).tau;
  const RangeParameterSet params = dynamic_ranging(t, tau, 3);
  require((params.R - oracle.R).cwiseAbs().maxCoeff() <= 1e-8,
          "range recovery, max error " + fmt((params.R - oracle.R).cwiseAbs().maxCoeff()) + " m");

  const CenteredGramSet grams = build_centered_grams(params);
  const PositionEstimate mds = mds_position(grams.B0, 2);
  auto [x_hat, q] = procrustes_align(mds.X_hat, rel.X_rel);
  (void)q;

  auto [c_imm, d_imm] = immobility_constraints({0, 1}, 2, 10);
  LyapunovSystem sys1 = build_lyapunov_system(x_hat, build_measurement_matrix(1, grams, {}));
  sys1.constraint_lhs = vstack(sys1.constraint_lhs, c_imm);
  sys1.constraint_rhs = vcat(sys1.constraint_rhs, d_imm);
  const KinematicEstimate y1 = lls(sys1, 1);
  require((y1.Y_hat - rel.derivatives_rel[0]).cwiseAbs().maxCoeff() <= 1e-6,
          "relative velocity, max error " +
              fmt((y1.Y_hat - rel.derivatives_rel[0]).cwiseAbs().maxCoeff()) + " m/s");

  LyapunovSystem sys2 =
      build_lyapunov_system(x_hat, build_measurement_matrix(2, grams, {y1.Y_hat}));
  sys2.constraint_lhs = sys1.constraint_lhs;
  sys2.constraint_rhs = sys1.constraint_rhs;
  const KinematicEstimate y2 = lls(sys2, 2);
  require((y2.Y_hat - rel.derivatives_rel[1]).cwiseAbs().maxCoeff() <= 1e-6,
          "relative acceleration, max error " +
              fmt((y2.Y_hat - rel.derivatives_rel[1]).cwiseAbs().maxCoeff()) + " m/s^2");

  const Matrix pc = centering_matrix(10);
  GeneralizedSystem g1 = build_generalized_system(x_hat, build_measurement_matrix(1, grams, {}));
  auto a1 = anchor_constraints(anchor_nodes({0, 1}, e.derivatives[0]), 2, 10);
  g1.constraint_lhs = a1.first;
  g1.constraint_rhs = a1.second;
  const KinematicEstimate ya1 = glls(g1, 1);
  require((ya1.Y_hat - e.derivatives[0]).cwiseAbs().maxCoeff() <= 1e-6,
          "anchored velocity, max error " +
              fmt((ya1.Y_hat - e.derivatives[0]).cwiseAbs().maxCoeff()) + " m/s");

  GeneralizedSystem g2 =
      build_generalized_system(x_hat, build_measurement_matrix(2, grams, {ya1.Y_hat * pc}));
  auto a2 = anchor_constraints(anchor_nodes({0, 1}, e.derivatives[1]), 2, 10);
  g2.constraint_lhs = a2.first;
  g2.constraint_rhs = a2.second;
  const KinematicEstimate ya2 = glls(g2, 2);
  require((ya2.Y_hat - e.derivatives[1]).cwiseAbs().maxCoeff() <= 1e-6,
          "anchored acceleration, max error " +
              fmt((ya2.Y_hat - e.derivatives[1]).cwiseAbs().maxCoeff()) + " m/s^2");
}

// 2. Rank laws of the two vectorized systems on random generic geometries.
void criterion_2() {
  bool rel_ok = true, abs_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const Index p = 2 + trial % 2;
    const Index n = p + 2 + trial % 9;
    const Matrix x = random_centered(p, n, 31000 + static_cast<std::uint64_t>(trial));
    const Matrix j = commutation_matrix(n);
    const Matrix k_rel = kron(Matrix::Identity(n, n), x.transpose());
    const Matrix k_abs = kron(centering_matrix(n), x.transpose());
    if (numeric_rank(Matrix(k_rel + j * k_rel)) != n * p - p * (p - 1) / 2) rel_ok = false;
    if (numeric_rank(Matrix(k_abs + j * k_abs)) != n * p - p * (p + 1) / 2) abs_ok = false;
  }
  require(rel_ok, "relative system rank NP - P(P-1)/2 on 100 random instances");
  require(abs_ok, "generalized system rank NP - P(P+1)/2 on 100 random instances");
}

// 3. Ranging RMSE attains the range-parameter bound across K.
void criterion_3() {
  for (DelayModel model : {DelayModel::PolynomialTruncated, DelayModel::Geometric}) {
    const double tol = model == DelayModel::PolynomialTruncated ? 0.10 : 0.20;
    const char* label =
        model == DelayModel::PolynomialTruncated ? "polynomial delays" : "geometric delays";
    ExperimentConfig c = base_config();
    c.ranging.delay_model = model;
    c.montecarlo.trials = 500;
    c.montecarlo.sweep = {"K", {10, 40, 100}};
    const ExperimentReport r = run_monte_carlo(c, worker_threads());
    for (double k : c.montecarlo.sweep.values)
      for (const char* qty : {"r", "rdot", "rddot"}) {
        const ReportRow* row = find_row(r, k, "ranging", qty);
        if (!row || row->rcrb_constrained <= 0) {
          require(false, std::string(qty) + " row missing at K=" + fmt(k));
          continue;
        }
        const double ratio = row->rmse / row->rcrb_constrained;
        require(std::abs(ratio - 1.0) <= tol, std::string(label) + ", K=" + fmt(k) + ", " + qty +
                                                  ": RMSE/bound = " + fmt(ratio));
      }
  }
}

// 4. Weighted estimators converge to the constrained bounds and dominate
//    their unweighted counterparts.
void criterion_4() {
  struct Case {
    const char* unweighted;
    const char* weighted;
    ExperimentConfig cfg;
  };
  for (Case cs : {Case{"LLS", "WLLS", preset_config("fig3")},
                  Case{"GLLS", "WGLLS", preset_config("fig5")}}) {
    cs.cfg.montecarlo.trials = 500;
    cs.cfg.montecarlo.sweep = {"K", {10, 40, 100}};
    const ExperimentReport r = run_monte_carlo(cs.cfg, worker_threads());
    for (double k : cs.cfg.montecarlo.sweep.values)
      for (const char* qty : {"Y1", "Y2"}) {
        const ReportRow* plain = find_row(r, k, cs.unweighted, qty);
        const ReportRow* weighted = find_row(r, k, cs.weighted, qty);
        if (!plain || !weighted) {
          require(false, std::string(cs.weighted) + " " + qty + " row missing at K=" + fmt(k));
          continue;
        }
        require(weighted->rmse <= plain->rmse * 1.001,
                std::string(cs.weighted) + " <= " + cs.unweighted + " at K=" + fmt(k) + ", " +
                    qty + " (" + fmt(weighted->rmse) + " vs " + fmt(plain->rmse) + ")");
        if (k == 100.0) {
          const double ratio = weighted->rmse / weighted->rcrb_constrained;
          require(ratio >= 0.75 && ratio <= 1.25,
                  std::string(cs.weighted) + " " + qty +
                      " attains the constrained bound at K=100: RMSE/bound = " + fmt(ratio));
        }
      }
  }
}

// 5. Weighted least squares beats the eigendecomposition velocity estimator
//    under constant-velocity motion.
void criterion_5() {
  ExperimentConfig c = preset_config("fig4");
  c.montecarlo.trials = 500;
  c.montecarlo.sweep = {"K", {10, 100}};
  const ExperimentReport r = run_monte_carlo(c, worker_threads());
  for (double k : c.montecarlo.sweep.values) {
    const ReportRow* wlls_row = find_row(r, k, "WLLS", "Y1");
    const ReportRow* lmds_row = find_row(r, k, "LMDS", "Y1");
    if (!wlls_row || !lmds_row) {
      require(false, "velocity rows missing at K=" + fmt(k));
      continue;
    }
    require(wlls_row->rmse <= lmds_row->rmse,
            "WLLS <= LMDS velocity RMSE at K=" + fmt(k) + " (" + fmt(wlls_row->rmse) + " vs " +
                fmt(lmds_row->rmse) + ")");
  }
}

// 6. More immobility/anchor constraints never hurt, and the weighted absolute
//    estimator stays near its constrained bound.
void criterion_6() {
  ExperimentConfig c = base_config();
  // Constraint-consistent motion: the first six nodes share identical kinematics.
  for (Index node = 1; node < 6; ++node)
    for (auto& y : c.scenario.derivatives) y.col(node) = y.col(0);
  c.ranging.K = 100;
  c.estimation.estimators = {"MDS", "LLS", "WLLS", "GLLS", "WGLLS"};
  c.montecarlo.trials = 300;
  c.montecarlo.sweep = {"n_constraints", {2, 3, 4, 5, 6}};
  c.report.rmse_normalization = 1.0;
  const ExperimentReport r = run_monte_carlo(c, worker_threads());
  for (const char* est : {"WLLS", "WGLLS"})
    for (const char* qty : {"Y1", "Y2"}) {
      double prev = -1.0;
      for (double nc : c.montecarlo.sweep.values) {
        const ReportRow* row = find_row(r, nc, est, qty);
        if (!row) {
          require(false, std::string(est) + " " + qty + " row missing at n=" + fmt(nc));
          continue;
        }
        if (prev >= 0.0)
          require(row->rmse <= prev * 1.05, std::string(est) + " " + qty +
                                                " non-increasing at n=" + fmt(nc) + " (" +
                                                fmt(row->rmse) + " vs " + fmt(prev) + ")");
        prev = row->rmse;
      }
    }
  for (const char* qty : {"Y1", "Y2"}) {
    const ReportRow* row = find_row(r, 6.0, "WGLLS", qty);
    const double ratio = row ? row->rmse / row->rcrb_constrained : -1.0;
    require(row && ratio >= 0.75 && ratio <= 1.25,
            std::string("WGLLS ") + qty +
                " attains the constrained bound at n=6: RMSE/bound = " + fmt(ratio));
  }
}

// 7. Trajectory error is smallest at the expansion point and grows away from it.
void criterion_7() {
  ExperimentConfig c = base_config();
  c.ranging.K = 500;
  c.ranging.sigma_m = 1.0;
  c.estimation.estimators = {"MDS", "LLS", "WLLS", "GLLS", "WGLLS"};
  c.estimation.immobile_nodes = {0, 1};
  c.estimation.anchored_nodes = {0, 1};
  c.montecarlo.trials = 100;
  c.trajectory_times = {-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0};
  const ExperimentReport r = run_monte_carlo(c, worker_threads());
  for (const char* qty : {"S_rel", "S_abs"}) {
    const char* est = std::string(qty) == "S_rel" ? "WLLS" : "WGLLS";
    const ReportRow* at0 = find_row(r, 0.0, est, qty);
    if (!at0) {
      require(false, std::string(qty) + " row at t=0 missing");
      continue;
    }
    require(at0->rmse <= c.ranging.sigma_m / 5.0,
            std::string(qty) + " at t=0 at least 5x below sigma (" + fmt(at0->rmse) + " m)");
    for (double sign : {-1.0, 1.0}) {
      double prev = at0->rmse;
      for (double mag : {0.25, 0.5, 1.0}) {
        const ReportRow* row = find_row(r, sign * mag, est, qty);
        if (!row) {
          require(false, std::string(qty) + " row at t=" + fmt(sign * mag) + " missing");
          continue;
        }
        require(row->rmse >= prev * 0.95, std::string(qty) + " non-decreasing at t=" +
                                              fmt(sign * mag) + " (" + fmt(row->rmse) + " vs " +
                                              fmt(prev) + ")");
        prev = row->rmse;
      }
    }
  }
}

// 8. Noise injected on raw time markers is equivalent to additive delay noise.
void criterion_8() {
  ExperimentReport reports[2];
  int idx = 0;
  for (const char* mode : {"delay", "timestamp"}) {
    ExperimentConfig c = base_config();
    c.ranging.noise_mode = mode;
    c.montecarlo.trials = 500;
    reports[idx++] = run_monte_carlo(c, worker_threads());
  }
  for (const char* qty : {"r", "rdot", "rddot"}) {
    const ReportRow* a = find_row(reports[0], 0.0, "ranging", qty);
    const ReportRow* b = find_row(reports[1], 0.0, "ranging", qty);
    if (!a || !b) {
      require(false, std::string(qty) + " row missing");
      continue;
    }
    const double ratio = b->rmse / a->rmse;
    require(std::abs(ratio - 1.0) <= 0.05,
            std::string(qty) + ": timestamp-noise vs delay-noise RMSE ratio = " + fmt(ratio));
  }
}

// 9. The first-order measurement-covariance approximation matches Monte Carlo.
void criterion_9() {
  const KinematicEnsemble e = reference_scenario();
  const RangeParameterSet params = range_derivative_oracle(e, 2);
  const TimestampTable t =
      generate_timestamps(e, 10, {-0.5, 0.5}, 0.0, DelayModel::PolynomialTruncated, 3);
  const double sigma_m = 0.1;
  const auto [v, tau0] = build_vandermonde(t, 3);
  (void)tau0;
  const RangeCrb crb = crb_range(v, (sigma_m / t.c) * (sigma_m / t.c), 3, t.c);
  const Matrix predicted = covariance_b(1, params, crb);

  const int draws = 2000;
  std::vector<Vector> samples;
  samples.reserve(draws);
  Vector mean = Vector::Zero(100);
  for (int i = 0; i < draws; ++i) {
    const DelayMeasurements m = measure_delays(t, sigma_m, 60000 + static_cast<std::uint64_t>(i));
    const CenteredGramSet g = build_centered_grams(dynamic_ranging(t, m.tau, 3));
    samples.push_back(vec(g.B1));
    mean += samples.back();
  }
  mean /= static_cast<double>(draws);
  double trace = 0.0;
  for (const auto& s : samples) trace += (s - mean).squaredNorm();
  trace /= static_cast<double>(draws - 1);
  const double ratio = trace / predicted.trace();
  require(std::abs(ratio - 1.0) <= 0.20,
          "Monte-Carlo / predicted covariance trace = " + fmt(ratio));
}

// 10. Identical configuration and seed produce byte-identical reports at any
//     thread count.
void criterion_10() {
  namespace fs = std::filesystem;
  ExperimentConfig c = base_config();
  c.estimation.estimators = {"MDS", "LLS", "WLLS"};
  c.estimation.immobile_nodes = {0, 1};
  c.montecarlo.trials = 16;
  const fs::path dir = fs::temp_directory_path() / "kinemds_acceptance_det";
  fs::remove_all(dir);
  emit_report(run_monte_carlo(c, 1), (dir / "single").string());
  emit_report(run_monte_carlo(c, worker_threads()), (dir / "multi").string());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = slurp(dir / "single" / "results.csv");
  const std::string b = slurp(dir / "multi" / "results.csv");
  require(!a.empty() && a == b, "results.csv byte-identical across 1 and " +
                                   std::to_string(worker_threads()) + " threads");
  fs::remove_all(dir);
}

const char* kDescriptions[] = {
    "noiseless end-to-end exactness",
    "rank laws of the vectorized systems",
    "ranging RMSE attains the range-parameter bound",
    "weighted estimators attain the constrained bounds",
    "WLLS dominates the eigendecomposition velocity estimator",
    "performance non-degrading in the constraint count",
    "trajectory error grows away from the expansion point",
    "timestamp-noise and delay-noise models agree",
    "first-order covariance approximation matches Monte Carlo",
    "byte-identical reports across thread counts",
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <criterion 1..10>\n");
    return 2;
  }
  const int n = std::atoi(argv[1]);
  if (n < 1 || n > 10) {
    std::fprintf(stderr, "criterion must be in 1..10\n");
    return 2;
  }
  try {
    switch (n) {
      case 1: criterion_1(); break;
      case 2: criterion_2(); break;
      case 3: criterion_3(); break;
      case 4: criterion_4(); break;
      case 5: criterion_5(); break;
      case 6: criterion_6(); break;
      case 7: criterion_7(); break;
      case 8: criterion_8(); break;
      case 9: criterion_9(); break;
      case 10: criterion_10(); break;
    }
  } catch (const std::exception& e) {
    std::printf("  error  %s\n", e.what());
    g_ok = false;
  }
  std::printf("criterion %d (%s): %s\n", n, kDescriptions[n - 1], g_ok ? "PASS" : "FAIL");
  return g_ok ? 0 : 1;
}
