#include <catch2/catch_amalgamated.hpp>

#include "kinemds/bounds.hpp"
#include "kinemds/gtwr.hpp"
#include "kinemds/ranging.hpp"

using namespace kinemds;

TEST_CASE("regression matrix assembly") {
  SECTION("constant-only model is a block of ones") {
    const TimestampTable t = generate_timestamps(reference_scenario(), 4, {-1.0, 1.0}, 0.0);
    const auto [v, tau] = build_vandermonde(t, 1);
    const Index nbar = static_cast<Index>(t.pairs.size());
    CHECK((v - kron(Matrix::Identity(nbar, nbar), Matrix::Ones(4, 1))).norm() == 0.0);
    CHECK(tau.size() == nbar * 4);
  }

  SECTION("two exchanges, linear model") {
    KinematicEnsemble e;
    e.dims = 1;
    e.nodes = 2;
    e.X = Matrix(1, 2);
    e.X << 0.0, 30.0;
    const TimestampTable t = generate_timestamps(e, 2, {-1.0, 1.0}, 0.0);
    const auto [v, tau] = build_vandermonde(t, 2);
    (void)tau;
    Matrix expected(2, 2);
    expected << 1, -1, 1, 1;
    CHECK((v - expected).norm() < 1e-14);
  }

  SECTION("dimensions at N=10, K=10, L=3") {
    const TimestampTable t = generate_timestamps(reference_scenario(), 10, {-0.5, 0.5}, 0.0);
    const auto [v, tau] = build_vandermonde(t, 3);
    CHECK(v.rows() == 450);
    CHECK(v.cols() == 135);
    CHECK(tau.size() == 450);
  }

  SECTION("underdetermined per-link system rejected") {
    const TimestampTable t = generate_timestamps(reference_scenario(), 2, {-0.5, 0.5}, 0.0);
    CHECK_THROWS_AS(build_vandermonde(t, 3), IdentifiabilityError);
    CHECK_THROWS_AS(estimate_theta_per_link(t, Vector::Zero(90), 3), IdentifiabilityError);
  }
}

TEST_CASE("coefficient estimation") {
  const TimestampTable t = generate_timestamps(reference_scenario(), 10, {-0.5, 0.5}, 0.0,
                                               DelayModel::PolynomialTruncated, 3);
  const auto [v, tau] = build_vandermonde(t, 3);

  SECTION("planted polynomial coefficients are recovered") {
    Vector theta_true(v.cols());
    for (Index i = 0; i < theta_true.size(); ++i)
      theta_true(i) = 1e-6 * (1.0 + 0.1 * static_cast<double>(i % 7));
    const Vector synthetic = v * theta_true;
    const Vector theta = estimate_theta(v, synthetic, Matrix::Identity(v.rows(), v.rows()));
    CHECK((theta - theta_true).norm() < 1e-10 * theta_true.norm());
  }

  SECTION("zero observations give zero coefficients") {
    const Vector theta = estimate_theta(v, Vector::Zero(v.rows()),
                                        Matrix::Identity(v.rows(), v.rows()));
    CHECK(theta.norm() < 1e-20);
  }

  SECTION("isotropic weight cancels") {
    const Vector a = estimate_theta(v, tau, Matrix::Identity(v.rows(), v.rows()));
    const Vector b = estimate_theta(v, tau, 4.0 * Matrix::Identity(v.rows(), v.rows()));
    CHECK((a - b).norm() < 1e-9 * a.norm());
  }

  SECTION("per-link solve equals the block solve") {
    const Vector block = estimate_theta(v, tau, Matrix::Identity(v.rows(), v.rows()));
    const Vector per_link = estimate_theta_per_link(t, tau, 3);
    CHECK((block - per_link).norm() < 1e-9 * block.norm());
  }
}

TEST_CASE("coefficient-to-range scaling") {
  const Index nbar = 1;
  SECTION("constant term scales by c") {
    Vector theta(nbar);
    theta << 1e-6;
    const RangeParameterSet p = theta_to_range_params(theta, 1, 2, 3e8);
    CHECK(p.r(0) == Catch::Approx(300.0));
  }
  SECTION("quadratic term carries the factorial") {
    Vector theta(3 * nbar);
    theta << 1e-6, 0.0, 1e-9;
    const RangeParameterSet p = theta_to_range_params(theta, 3, 2, 3e8);
    CHECK(p.rddot(0) == Catch::Approx(0.6));
  }
}

TEST_CASE("closed-loop noiseless ranging") {
  const KinematicEnsemble e = reference_scenario();
  const RangeParameterSet oracle = range_derivative_oracle(e, 2);
  const TimestampTable t =
      generate_timestamps(e, 10, {-0.5, 0.5}, 0.0, DelayModel::PolynomialTruncated, 3);
  const DelayMeasurements m = measure_delays(t, 0.0, 0);
  const RangeParameterSet est = dynamic_ranging(t, m.tau, 3);
  CHECK((est.R - oracle.R).norm() < 1e-7);
  CHECK((est.Rdot - oracle.Rdot).norm() < 1e-7);
  CHECK((est.Rddot - oracle.Rddot).norm() < 1e-6);

  SECTION("raising the model order leaves low orders unchanged") {
    const TimestampTable t2 =
        generate_timestamps(e, 10, {-0.5, 0.5}, 0.0, DelayModel::PolynomialTruncated, 2);
    const Vector tau2 = measure_delays(t2, 0.0, 0).tau;
    const RangeParameterSet low = dynamic_ranging(t2, tau2, 2);
    const RangeParameterSet high = dynamic_ranging(t2, tau2, 3);
    CHECK((low.R - high.R).norm() < 1e-7);
    CHECK((low.Rdot - high.Rdot).norm() < 1e-7);
  }
}

TEST_CASE("double-centered matrices") {
  const KinematicEnsemble e = reference_scenario();
  const RelativeState rel = relative_state(e);
  const RangeParameterSet p = range_derivative_oracle(e, 2);
  const CenteredGramSet g = build_centered_grams(p);

  SECTION("position Gram matches centered coordinates") {
    const Matrix expected = rel.X_rel.transpose() * rel.X_rel;
    CHECK((g.B0 - expected).norm() < 1e-8 * expected.norm());
  }

  SECTION("zero rates give zero higher Grams") {
    RangeParameterSet s = p;
    s.Rdot.setZero();
    s.Rddot.setZero();
    const CenteredGramSet gz = build_centered_grams(s);
    CHECK(gz.B1.norm() == 0.0);
    CHECK(gz.B2.norm() == 0.0);
  }

  SECTION("outputs are doubly centered") {
    for (const Matrix* m : {&g.B0, &g.B1, &g.B2})
      for (Index r = 0; r < m->rows(); ++r)
        CHECK(std::abs(m->row(r).sum()) < 1e-9 * (1.0 + m->norm()));
  }

  SECTION("second-derivative identity") {
    const Matrix& y1 = rel.derivatives_rel[0];
    const Matrix& y2 = rel.derivatives_rel[1];
    const Matrix lhs = g.B2 - 2.0 * y1.transpose() * y1;
    const Matrix rhs = rel.X_rel.transpose() * y2 + y2.transpose() * rel.X_rel;
    CHECK((lhs - rhs).norm() < 1e-6 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("estimator variance matches the linear-model prediction") {
  // Sample covariance of the WLS coefficients vs the closed-form covariance.
  const KinematicEnsemble e = reference_scenario();
  const TimestampTable t =
      generate_timestamps(e, 10, {-0.5, 0.5}, 0.0, DelayModel::PolynomialTruncated, 3);
  const double sigma_m = 0.1;
  const auto [v, tau0] = build_vandermonde(t, 3);
  (void)tau0;
  const double tau_var = (sigma_m / t.c) * (sigma_m / t.c);
  const Matrix predicted = tau_var * (v.transpose() * v).inverse();

  const int trials = 500;
  const Vector theta0 = estimate_theta_per_link(t, measure_delays(t, 0.0, 0).tau, 3);
  Matrix sum_outer = Matrix::Zero(v.cols(), v.cols());
  for (int i = 0; i < trials; ++i) {
    const DelayMeasurements m = measure_delays(t, sigma_m, 5000 + static_cast<std::uint64_t>(i));
    const Vector d = estimate_theta_per_link(t, m.tau, 3) - theta0;
    sum_outer += d * d.transpose();
  }
  const Matrix sample = sum_outer / static_cast<double>(trials);
  CHECK(std::abs(sample.trace() / predicted.trace() - 1.0) < 0.15);
}
