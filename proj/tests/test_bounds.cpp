#include <catch2/catch_amalgamated.hpp>

#include "kinemds/bounds.hpp"
#include "kinemds/gtwr.hpp"
#include "kinemds/harness.hpp"

using namespace kinemds;

namespace {

struct Setup {
  KinematicEnsemble e = reference_scenario();
  RelativeState rel = relative_state(e);
  RangeParameterSet params = range_derivative_oracle(e, 2);
  TimestampTable t;
  Matrix v;
  RangeCrb crb;

  explicit Setup(Index K = 10, double sigma_m = 0.1) {
    t = generate_timestamps(e, K, {-0.5, 0.5}, 0.0, DelayModel::PolynomialTruncated, 3);
    auto [vv, tau] = build_vandermonde(t, 3);
    (void)tau;
    v = std::move(vv);
    const double tau_var = (sigma_m / t.c) * (sigma_m / t.c);
    crb = crb_range(v, tau_var, 3, t.c);
  }
};

}  // namespace

TEST_CASE("range-parameter lower bound") {
  Setup s;

  SECTION("noise scaling is quadratic") {
    const double tau_var = (0.1 / s.t.c) * (0.1 / s.t.c);
    const RangeCrb twice = crb_range(s.v, 4.0 * tau_var, 3, s.t.c);
    CHECK(twice.Sigma_r.trace() == Catch::Approx(4.0 * s.crb.Sigma_r.trace()));
    CHECK(twice.Sigma_rddot.trace() == Catch::Approx(4.0 * s.crb.Sigma_rddot.trace()));
  }

  SECTION("matrix and isotropic overloads agree") {
    const double tau_var = (0.1 / s.t.c) * (0.1 / s.t.c);
    const RangeCrb m = crb_range(
        s.v, tau_var * Matrix::Identity(s.v.rows(), s.v.rows()), 3, s.t.c);
    CHECK((m.Sigma_r - s.crb.Sigma_r).norm() < 1e-9 * s.crb.Sigma_r.norm());
    CHECK((m.Sigma_rdot - s.crb.Sigma_rdot).norm() < 1e-9 * s.crb.Sigma_rdot.norm());
  }

  SECTION("single link, constant model: sample-mean variance") {
    KinematicEnsemble pair;
    pair.dims = 1;
    pair.nodes = 2;
    pair.X = Matrix(1, 2);
    pair.X << 0.0, 120.0;
    const Index K = 25;
    const TimestampTable t = generate_timestamps(pair, K, {-0.5, 0.5}, 0.0);
    const auto [v, tau] = build_vandermonde(t, 1);
    (void)tau;
    const double sigma_t = 0.1 / t.c;
    const RangeCrb crb = crb_range(v, sigma_t * sigma_t, 1, t.c);
    CHECK(crb.Sigma_r(0, 0) ==
          Catch::Approx(t.c * t.c * sigma_t * sigma_t / static_cast<double>(K)));
    CHECK(crb.Sigma_rdot.size() == 0);
  }

  SECTION("root bound decays as the inverse square root of K") {
    std::vector<double> ks = {10, 20, 40, 80, 160};
    std::vector<double> log_k, log_b;
    for (double k : ks) {
      Setup sk(static_cast<Index>(k));
      log_k.push_back(std::log(k));
      log_b.push_back(std::log(std::sqrt(sk.crb.Sigma_r.diagonal().mean())));
    }
    // Least-squares slope of log(bound) vs log(K).
    const double n = static_cast<double>(ks.size());
    double mx = 0, my = 0, sxy = 0, sxx = 0;
    for (double x : log_k) mx += x / n;
    for (double y : log_b) my += y / n;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      sxy += (log_k[i] - mx) * (log_b[i] - my);
      sxx += (log_k[i] - mx) * (log_k[i] - mx);
    }
    CHECK(sxy / sxx == Catch::Approx(-0.5).margin(0.05));
  }
}

TEST_CASE("position information matrix") {
  Setup s;
  const Matrix fim = fim_position(s.rel.X_rel, s.crb.Sigma_r);

  SECTION("translations carry no information") {
    const Matrix trans = Vector::Constant(2, 1.0) * Matrix::Ones(1, 10);
    CHECK((fim * vec(trans)).norm() < 1e-6 * fim.norm());
  }

  SECTION("rotations carry no information") {
    Matrix skew(2, 2);
    skew << 0, -1, 1, 0;
    const Matrix rot = skew * s.rel.X_rel;
    CHECK((fim * vec(rot)).norm() < 1e-6 * fim.norm() * rot.norm());
    CHECK(numeric_rank(fim, 1e-8) == 20 - 3);  // nullity P(P+1)/2
  }

  SECTION("distance Jacobian matches finite differences") {
    const Matrix jx = distance_jacobian(s.rel.X_rel);
    const double h = 1e-6;
    const auto pairs = pair_list(10);
    for (Index col : {0, 7, 19}) {
      Matrix xp = s.rel.X_rel, xm = s.rel.X_rel;
      xp(col % 2, col / 2) += h;
      xm(col % 2, col / 2) -= h;
      const Matrix dp = edm_of_positions(xp).D, dm = edm_of_positions(xm).D;
      for (std::size_t q = 0; q < pairs.size(); ++q) {
        const auto [i, j] = pairs[q];
        const double fd = (dp(i, j) - dm(i, j)) / (2.0 * h);
        CHECK(jx(static_cast<Index>(q), col) == Catch::Approx(fd).margin(1e-6));
      }
    }
  }

  SECTION("coincident nodes rejected") {
    Matrix x = s.rel.X_rel;
    x.col(1) = x.col(0);
    CHECK_THROWS_AS(distance_jacobian(x), DegenerateGeometryError);
  }
}

TEST_CASE("measurement covariance approximations") {
  Setup s;

  SECTION("zero range uncertainty gives zero covariance") {
    RangeCrb zero;
    const Index nbar = pair_count(10);
    zero.Sigma_r = Matrix::Zero(nbar, nbar);
    zero.Sigma_rdot = Matrix::Zero(nbar, nbar);
    zero.Sigma_rddot = Matrix::Zero(nbar, nbar);
    CHECK(covariance_b(1, s.params, zero).norm() == 0.0);
  }

  SECTION("velocity-error term vanishes with zero sensitivity") {
    const Matrix core = covariance_b(2, s.params, s.crb, Matrix::Zero(100, 20),
                                     Matrix::Identity(20, 20));
    const Matrix a_y = sensitivity_design(s.rel.derivatives_rel[0], false);
    const Matrix with = covariance_b(2, s.params, s.crb, a_y, Matrix::Zero(20, 20));
    CHECK((core - with).norm() < 1e-9 * (1.0 + core.norm()));
  }

  SECTION("unsupported order rejected") {
    CHECK_THROWS_AS(covariance_b(3, s.params, s.crb), ConfigError);
  }

  SECTION("lifted covariance mirrors pairs symmetrically") {
    const Index nbar = pair_count(10);
    const Matrix lifted = lift_pair_covariance(Matrix::Identity(nbar, nbar), 10);
    CHECK(lifted(1, 10) == Catch::Approx(1.0));   // entry (1,0) vs its mirror (0,1)
    CHECK(lifted(10, 10) == Catch::Approx(1.0));
    CHECK(lifted(0, 0) == 0.0);                    // diagonal vec positions empty
  }
}

TEST_CASE("kinematic bounds") {
  Setup s;
  const Matrix sigma_x = crb_position(s.rel.X_rel, s.crb.Sigma_r);
  const Matrix a_y = sensitivity_design(s.rel.derivatives_rel[0], false);
  const Matrix sigma_b = covariance_b(1, s.params, s.crb);
  const Matrix sigma_rho = covariance_rho(a_y, sigma_x, sigma_b);
  const Matrix a = sensitivity_design(s.rel.X_rel, false);
  auto [c_imm, d_imm] = immobility_constraints({0, 1}, 2, 10);
  (void)d_imm;
  const Matrix constraints = vstack(centering_constraints(2, 10), c_imm);

  SECTION("rho covariance degenerates correctly") {
    CHECK((covariance_rho(a_y, Matrix::Zero(20, 20), sigma_b) - sigma_b).norm() <
          1e-9 * sigma_b.norm());
    const Matrix zero_y = sensitivity_design(Matrix::Zero(2, 10), false);
    CHECK((covariance_rho(zero_y, sigma_x, sigma_b) - sigma_b).norm() <
          1e-12 * (1.0 + sigma_b.norm()));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_rho);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10 * sigma_rho.trace());
  }

  SECTION("constrained bound dominates the oracle bound") {
    const KinematicCrb k = crb_kinematics(a, sigma_rho, 1, constraints);
    CHECK(k.constrained.trace() >= k.unconstrained.trace() * (1.0 - 1e-9));
  }

  SECTION("no variance along constrained directions") {
    const KinematicCrb k = crb_kinematics(a, sigma_rho, 1, constraints);
    CHECK((constraints * k.constrained).norm() < 1e-8 * k.constrained.norm());
  }

  SECTION("bounds scale linearly with the noise covariance") {
    const KinematicCrb k1 = crb_kinematics(a, sigma_rho, 1, constraints);
    const KinematicCrb k2 = crb_kinematics(a, 2.0 * sigma_rho, 1, constraints);
    CHECK(k2.constrained.trace() == Catch::Approx(2.0 * k1.constrained.trace()).epsilon(1e-6));
    CHECK(k2.unconstrained.trace() ==
          Catch::Approx(2.0 * k1.unconstrained.trace()).epsilon(1e-6));
  }

  SECTION("insufficient constraints are detected") {
    CHECK_THROWS_AS(crb_kinematics(a, sigma_rho, 1, centering_constraints(2, 10)),
                    IdentifiabilityError);
  }

  SECTION("weighting matrix properties") {
    const Matrix w = weighting_matrix(a_y, sigma_x, sigma_b);
    CHECK((w - w.transpose()).norm() < 1e-12 * (1.0 + w.norm()));
    const Matrix wz =
        weighting_matrix(Matrix::Zero(100, 20), Matrix::Zero(20, 20), Matrix::Zero(100, 100));
    CHECK(wz.norm() == 0.0);
  }
}

TEST_CASE("bound export format") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "kinemds_bounds_test";
  fs::create_directories(dir);
  const std::string path = (dir / "bounds.csv").string();
  save_bounds({{"r", 0, "unconstrained", 1.25}, {"velocity", 1, "constrained", 0.5}}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "quantity,order,bound_type,value");
  std::getline(in, line);
  CHECK(line == "r,0,unconstrained,1.25");
  std::getline(in, line);
  CHECK(line == "velocity,1,constrained,0.5");
  fs::remove_all(dir);
}
