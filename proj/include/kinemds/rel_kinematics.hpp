#ifndef KINEMDS_REL_KINEMATICS_HPP
#define KINEMDS_REL_KINEMATICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "kinemds/linalg.hpp"
#include "kinemds/ranging.hpp"
#include "kinemds/rel_position.hpp"

namespace kinemds {

/// M-th order measurement matrix B_M (symmetric, doubly centered).
struct MeasurementMatrix {
  Index order = 0;
  Matrix B;
};

/// Vectorized Lyapunov-like system A y = b with optional equality constraints
/// and weight; A = (I_{N^2} + J)(I_N (x) X').
struct LyapunovSystem {
  Matrix A;                       // N^2 x NP
  Vector b;                       // N^2
  Matrix constraint_lhs;          // rows x NP (may be empty)
  Vector constraint_rhs;
  std::optional<Matrix> weight;   // N^2 x N^2
  Index dims = 0, nodes = 0;
};

enum class KinematicMethod { LMDS, LLS, WLLS, GLLS, WGLLS };

struct KinematicEstimate {
  Index order = 0;
  Matrix Y_hat;         // P x N
  Vector multipliers;
  KinematicMethod method = KinematicMethod::LLS;
};

inline double binomial(Index n, Index k) {
  double r = 1.0;
  for (Index i = 1; i <= k; ++i) r *= static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// B_1 = B^(1); B_M = B^(M) - sum_{m=1}^{M-1} C(M,m) Y_{M-m}' Y_m with the
/// product-rule coefficients (the M=2 case carries the factor 2 on Y_1' Y_1).
inline MeasurementMatrix build_measurement_matrix(Index order, const CenteredGramSet& grams,
                                                  const std::vector<Matrix>& lower) {
  if (order < 1) throw ConfigError("build_measurement_matrix: order must be >= 1");
  if (order > 2 && grams.B2.size() == 0)
    throw ConfigError("build_measurement_matrix: grams beyond order 2 unavailable");
  Matrix b;
  switch (order) {
    case 1: b = grams.B1; break;
    case 2: b = grams.B2; break;
    default: throw ConfigError("build_measurement_matrix: grams supply orders 1 and 2 only");
  }
  if (b.size() == 0) throw ConfigError("build_measurement_matrix: required gram missing");
  if (static_cast<Index>(lower.size()) < order - 1)
    throw ConfigError("build_measurement_matrix: lower-order kinematics missing");
  for (Index m = 1; m < order; ++m)
    b -= binomial(order, m) * lower[static_cast<std::size_t>(order - m - 1)].transpose() *
         lower[static_cast<std::size_t>(m - 1)];
  return {order, std::move(b)};
}

/// Constant-velocity MDS: relative velocity (up to rotation) from the top-P
/// eigenpairs of B^(2)/2.
inline Matrix lmds_velocity(const Matrix& b2_gram, Index p) {
  auto [values, vectors] = detail::top_eigenpairs(0.5 * b2_gram, p, "lmds_velocity");
  return values.cwiseSqrt().asDiagonal() * vectors.transpose();
}

/// Orthogonal H minimizing ||(I+J)(Ytilde' (x) X') vec(H) - vec(B^(1))||;
/// unconstrained LS followed by projection onto the orthogonal group.
inline Matrix estimate_rotation(const Matrix& b1_gram, const Matrix& x_hat,
                                const Matrix& y_tilde1) {
  const Index p = x_hat.rows();
  const Index n = x_hat.cols();
  if (y_tilde1.rows() != p || y_tilde1.cols() != n || b1_gram.rows() != n)
    throw ConfigError("estimate_rotation: shape mismatch");
  const Matrix j = commutation_matrix(n);
  const Matrix k = kron(y_tilde1.transpose(), x_hat.transpose());
  const Matrix phi = k + j * k;
  if (numeric_rank(phi) < p * p)
    throw DegenerateGeometryError("estimate_rotation: ambiguous rotation (rank-deficient system)");
  const Vector h_vec = pseudo_inverse(phi) * vec(b1_gram);
  const Matrix h_ls = unvec(h_vec, p, p);
  Eigen::JacobiSVD<Matrix> svd(h_ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Rows enforcing Y 1_N = 0 (the kinematic matrix is centered).
inline Matrix centering_constraints(Index p, Index n) {
  return kron(Matrix::Ones(1, n), Matrix::Identity(p, p));
}

/// A = (I_{N^2} + J)(I_N (x) X'), so A vec(Y) = vec(X'Y + Y'X).
/// The measurement b is exactly doubly centered, which pins Y 1_N = 0; those
/// centering rows ship as built-in constraints of the system.
inline LyapunovSystem build_lyapunov_system(const Matrix& x_hat, const MeasurementMatrix& bm) {
  const Index p = x_hat.rows();
  const Index n = x_hat.cols();
  if (bm.B.rows() != n || bm.B.cols() != n)
    throw ConfigError("build_lyapunov_system: B_M must be N x N");
  const Matrix j = commutation_matrix(n);
  const Matrix k = kron(Matrix::Identity(n, n), x_hat.transpose());
  LyapunovSystem sys;
  sys.A = k + j * k;
  sys.b = vec(bm.B);
  sys.constraint_lhs = centering_constraints(p, n);
  sys.constraint_rhs = Vector::Zero(p);
  sys.dims = p;
  sys.nodes = n;
  return sys;
}

/// Rows equating the kinematic columns of the listed nodes pairwise, with the
/// first node as pivot: the [I_P, -I_P, 0] pattern. Node indices are 0-based.
inline std::pair<Matrix, Vector> immobility_constraints(const std::vector<Index>& nodes,
                                                        Index p, Index n) {
  if (nodes.size() < 2)
    throw ConfigError("immobility_constraints: need at least two nodes");
  for (Index node : nodes)
    if (node < 0 || node >= n) throw ConfigError("immobility_constraints: node index out of range");
  const Index rows = static_cast<Index>(nodes.size() - 1) * p;
  Matrix c = Matrix::Zero(rows, n * p);
  const Index pivot = nodes.front();
  Index row = 0;
  for (std::size_t k = 1; k < nodes.size(); ++k)
    for (Index coord = 0; coord < p; ++coord, ++row) {
      c(row, pivot * p + coord) = 1.0;
      c(row, nodes[k] * p + coord) = -1.0;
    }
  if (numeric_rank(c) < rows)
    throw ConfigError("immobility_constraints: redundant constraint rows");
  return {std::move(c), Vector::Zero(rows)};
}

namespace detail {

inline KinematicEstimate solve_lyapunov(const LyapunovSystem& sys, Index order,
                                        KinematicMethod method, bool weighted) {
  ConstrainedLsProblem p;
  p.design = sys.A;
  p.rhs = sys.b;
  p.constraint_lhs = sys.constraint_lhs;
  p.constraint_rhs = sys.constraint_rhs;
  if (weighted) {
    if (!sys.weight) throw ConfigError("weighted solve requested without a weight matrix");
    p.weight = sys.weight;
  }
  const KktSolution sol = solve_kkt(p);
  KinematicEstimate est;
  est.order = order;
  est.Y_hat = unvec(sol.solution, sys.dims, sys.nodes);
  est.multipliers = sol.multipliers;
  est.method = method;
  return est;
}

}  // namespace detail

/// Constrained Lyapunov-like least squares.
inline KinematicEstimate lls(const LyapunovSystem& sys, Index order = 1) {
  return detail::solve_lyapunov(sys, order, KinematicMethod::LLS, false);
}

/// Weighted variant; identical to lls when the weight is (a multiple of) I.
inline KinematicEstimate wlls(const LyapunovSystem& sys, Index order = 1) {
  return detail::solve_lyapunov(sys, order, KinematicMethod::WLLS, true);
}

/// S(t) = X_hat + sum_m (m!)^-1 Y_hat_m (t-t0)^m; estimates ordered by M.
inline Matrix reconstruct_trajectory(const Matrix& x_hat,
                                     const std::vector<Matrix>& estimates, double t,
                                     double t0 = 0.0) {
  Matrix s = x_hat;
  double power = 1.0, factorial = 1.0;
  for (std::size_t m = 0; m < estimates.size(); ++m) {
    power *= (t - t0);
    factorial *= static_cast<double>(m + 1);
    s += (power / factorial) * estimates[m];
  }
  return s;
}

}  // namespace kinemds

#endif
