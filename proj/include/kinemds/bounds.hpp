#ifndef KINEMDS_BOUNDS_HPP
#define KINEMDS_BOUNDS_HPP

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "kinemds/abs_kinematics.hpp"
#include "kinemds/ranging.hpp"

namespace kinemds {

/// Diagonal blocks of the range-parameter CRB, in physical units.
struct RangeCrb {
  Matrix Sigma_r;      // m^2
  Matrix Sigma_rdot;   // m^2/s^2
  Matrix Sigma_rddot;  // m^2/s^4 (empty when L < 3)
};

/// Fisher information and lower bounds for one kinematic order.
struct KinematicCrb {
  Index order = 0;
  Matrix fim;            // NP x NP
  Matrix unconstrained;  // pinv(F): oracle bound
  Matrix constrained;    // U (U'FU)^-1 U' (empty when no constraints supplied)
};

/// CRB on the range parameters: Gamma (V' Sigma^-1 V)^-1 Gamma with
/// Gamma = diag(c*0!, c*1!, ...) (x) I_Nbar, blocks extracted per order.
inline RangeCrb crb_range(const Matrix& v, const Matrix& sigma, Index L,
                          double c = kSpeedOfLight) {
  if (L < 1 || L > 3) throw ConfigError("crb_range: L must be in [1,3]");
  if (v.cols() % L != 0) throw ConfigError("crb_range: V column count not divisible by L");
  const Index nbar = v.cols() / L;
  const Eigen::LDLT<Matrix> sig(sigma);
  if (sig.info() != Eigen::Success)
    throw IdentifiabilityError("crb_range: noise covariance not positive definite");
  const Matrix normal = v.transpose() * sig.solve(v);
  Eigen::FullPivLU<Matrix> lu(normal);
  lu.setThreshold(kRankCutoff);
  if (!lu.isInvertible()) throw IdentifiabilityError("crb_range: singular normal matrix");
  const Matrix inv = lu.solve(Matrix::Identity(normal.rows(), normal.cols()));
  RangeCrb out;
  double factorial = 1.0;
  for (Index l = 0; l < L; ++l) {
    if (l > 0) factorial *= static_cast<double>(l);
    const double g = c * factorial;
    const Matrix block = g * g * inv.block(l * nbar, l * nbar, nbar, nbar);
    switch (l) {
      case 0: out.Sigma_r = block; break;
      case 1: out.Sigma_rdot = block; break;
      case 2: out.Sigma_rddot = block; break;
    }
  }
  return out;
}

/// Isotropic shortcut, Sigma = sigma_tau^2 I.
inline RangeCrb crb_range(const Matrix& v, double tau_variance, Index L,
                          double c = kSpeedOfLight) {
  if (tau_variance <= 0.0) throw ConfigError("crb_range: tau variance must be > 0");
  if (L < 1 || L > 3) throw ConfigError("crb_range: L must be in [1,3]");
  const Index nbar = v.cols() / L;
  const Matrix normal = (v.transpose() * v) / tau_variance;
  Eigen::FullPivLU<Matrix> lu(normal);
  lu.setThreshold(kRankCutoff);
  if (!lu.isInvertible()) throw IdentifiabilityError("crb_range: singular normal matrix");
  const Matrix inv = lu.solve(Matrix::Identity(normal.rows(), normal.cols()));
  RangeCrb out;
  double factorial = 1.0;
  for (Index l = 0; l < L; ++l) {
    if (l > 0) factorial *= static_cast<double>(l);
    const double g = c * factorial;
    const Matrix block = g * g * inv.block(l * nbar, l * nbar, nbar, nbar);
    switch (l) {
      case 0: out.Sigma_r = block; break;
      case 1: out.Sigma_rdot = block; break;
      case 2: out.Sigma_rddot = block; break;
    }
  }
  return out;
}

/// Jacobian of the stacked pairwise distances (pair-major) wrt vec(X):
/// row (i,j) carries (x_i - x_j)'/r_ij in node-i block and its negation in j.
inline Matrix distance_jacobian(const Matrix& x) {
  const Index p = x.rows();
  const Index n = x.cols();
  const auto pairs = pair_list(n);
  Matrix jx = Matrix::Zero(static_cast<Index>(pairs.size()), n * p);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto [i, j] = pairs[q];
    const Vector delta = x.col(i) - x.col(j);
    const double r = delta.norm();
    if (r == 0.0)
      throw DegenerateGeometryError("distance_jacobian: coincident nodes " + std::to_string(i) +
                                    "," + std::to_string(j));
    jx.block(static_cast<Index>(q), i * p, 1, p) = delta.transpose() / r;
    jx.block(static_cast<Index>(q), j * p, 1, p) = -delta.transpose() / r;
  }
  return jx;
}

/// Fisher information of the node positions from pairwise ranges:
/// F_x = J_x' Sigma_r^-1 J_x. Singular (translation + rotation nullspace).
inline Matrix fim_position(const Matrix& x, const Matrix& sigma_r) {
  const Matrix jx = distance_jacobian(x);
  const Eigen::LDLT<Matrix> sig(sigma_r);
  if (sig.info() != Eigen::Success)
    throw IdentifiabilityError("fim_position: range covariance not positive definite");
  return jx.transpose() * sig.solve(jx);
}

/// Anchorless position bound: Moore-Penrose pseudo-inverse of the FIM.
inline Matrix crb_position(const Matrix& x, const Matrix& sigma_r) {
  return pseudo_inverse(fim_position(x, sigma_r));
}

/// Lift an Nbar-indexed pair covariance to N^2-indexed vec order: both copies
/// of a pair map to the same underlying variable (fully correlated mirrors),
/// diagonal vec positions stay zero.
inline Matrix lift_pair_covariance(const Matrix& sigma, Index n) {
  const auto pairs = pair_list(n);
  if (sigma.rows() != static_cast<Index>(pairs.size()))
    throw ConfigError("lift_pair_covariance: size mismatch");
  Matrix s = Matrix::Zero(n * n, static_cast<Index>(pairs.size()));
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto [i, j] = pairs[q];
    s(j * n + i, static_cast<Index>(q)) = 1.0;  // vec position of entry (i,j)
    s(i * n + j, static_cast<Index>(q)) = 1.0;  // and of its mirror (j,i)
  }
  return s * sigma * s.transpose();
}

/// Appendix-style high-SNR covariance of vec(B_M) for M in {1,2}.
/// psi_y (= A_y of order 1) and sigma_xdot are only used for M = 2.
inline Matrix covariance_b(Index order, const RangeParameterSet& params, const RangeCrb& crb,
                           const Matrix& psi_y = Matrix(), const Matrix& sigma_xdot = Matrix()) {
  if (order != 1 && order != 2)
    throw ConfigError("covariance_b: implemented for orders 1 and 2 only");
  const Index n = params.nodes();
  const Matrix p_tilde = kron(centering_matrix(n), centering_matrix(n));
  const Vector psi_r = vec(params.R);
  const Vector psi_rdot = vec(params.Rdot);
  const Matrix sbar_r = lift_pair_covariance(crb.Sigma_r, n);
  const Matrix sbar_rdot = lift_pair_covariance(crb.Sigma_rdot, n);
  Matrix core;
  if (order == 1) {
    core = psi_r.asDiagonal() * sbar_rdot * psi_r.asDiagonal();
    core += psi_rdot.asDiagonal() * sbar_r * psi_rdot.asDiagonal();
  } else {
    if (params.order < 3 || crb.Sigma_rddot.size() == 0)
      throw ConfigError("covariance_b: order 2 needs acceleration range parameters and CRB");
    const Vector psi_rddot = vec(params.Rddot);
    const Matrix sbar_rddot = lift_pair_covariance(crb.Sigma_rddot, n);
    core = psi_r.asDiagonal() * sbar_rddot * psi_r.asDiagonal();
    core += psi_rddot.asDiagonal() * sbar_r * psi_rddot.asDiagonal();
    core += 4.0 * (psi_rdot.asDiagonal() * sbar_rdot * psi_rdot.asDiagonal());
  }
  Matrix sigma_b = p_tilde * core * p_tilde;
  if (order == 2) {
    if (psi_y.size() == 0 || sigma_xdot.size() == 0)
      throw ConfigError("covariance_b: order 2 needs the order-1 design and velocity covariance");
    sigma_b += 4.0 * psi_y * sigma_xdot * psi_y.transpose();
  }
  return clip_psd(sigma_b);
}

/// First-order sensitivity of vec(B_M) to position errors:
///   A_y = (I + J)(I_N (x) Y') for the relative system,
///   A_y = (I + J)(P (x) Y') for the generalized one.
inline Matrix sensitivity_design(const Matrix& y, bool generalized) {
  const Index n = y.cols();
  const Matrix j = commutation_matrix(n);
  const Matrix base = generalized ? kron(centering_matrix(n), y.transpose())
                                  : kron(Matrix::Identity(n, n), y.transpose());
  return base + j * base;
}

/// Sigma_rho = A_y Sigma_x A_y' + Sigma_b (symmetric PSD after clipping).
inline Matrix covariance_rho(const Matrix& a_y, const Matrix& sigma_x, const Matrix& sigma_b) {
  if (a_y.cols() != sigma_x.rows()) throw ConfigError("covariance_rho: shape mismatch");
  return clip_psd(a_y * sigma_x * a_y.transpose() + sigma_b);
}

/// FIM F = A' Sigma_rho^+ A; unconstrained oracle bound = F^+; constrained
/// bound = U (U'FU)^-1 U' with U spanning null(C).
inline KinematicCrb crb_kinematics(const Matrix& a, const Matrix& sigma_rho, Index order,
                                   const Matrix& constraints = Matrix()) {
  KinematicCrb out;
  out.order = order;
  out.fim = a.transpose() * pseudo_inverse(sigma_rho) * a;
  out.unconstrained = pseudo_inverse(out.fim);
  if (constraints.rows() > 0) {
    if (constraints.cols() != a.cols()) throw ConfigError("crb_kinematics: constraint width mismatch");
    const Matrix u = nullspace_basis(constraints);
    const Matrix inner = u.transpose() * out.fim * u;
    Eigen::FullPivLU<Matrix> lu(inner);
    lu.setThreshold(kRankCutoff);
    if (!lu.isInvertible())
      throw IdentifiabilityError(
          "crb_kinematics: constraints do not resolve the information deficiency");
    out.constrained = u * lu.solve(Matrix::Identity(inner.rows(), inner.cols())) * u.transpose();
  }
  return out;
}

/// BLUE weighting: W = (A_y Sigma_x A_y' + Sigma_b)^+ with plug-in inputs.
inline Matrix weighting_matrix(const Matrix& a_y, const Matrix& sigma_x, const Matrix& sigma_b) {
  return pseudo_inverse(covariance_rho(a_y, sigma_x, sigma_b));
}

struct BoundRecord {
  std::string quantity;  // "position", "velocity", "acceleration", ...
  Index order = 0;
  std::string bound_type;  // "unconstrained" | "constrained"
  double value = 0.0;      // trace-normalized root bound
};

inline void save_bounds(const std::vector<BoundRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "quantity,order,bound_type,value\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%s,%.17g\n", r.quantity.c_str(),
                  static_cast<long long>(r.order), r.bound_type.c_str(), r.value);
    out << buf;
  }
}

}  // namespace kinemds

#endif
