#ifndef KINEMDS_REL_POSITION_HPP
#define KINEMDS_REL_POSITION_HPP

#include <algorithm>
#include <numeric>
#include <vector>

#include "kinemds/linalg.hpp"

namespace kinemds {

struct PositionEstimate {
  Matrix X_hat;               // P x N, centered
  Vector eigenvalues_used;    // top P, descending
  double residual = 0.0;      // ||B0 - X_hat' X_hat||_F
};

namespace detail {

/// Top-p eigenpairs of a symmetric matrix, eigenvalues descending, each
/// eigenvector's sign fixed so its largest-magnitude entry is positive.
inline std::pair<Vector, Matrix> top_eigenpairs(const Matrix& sym, Index p,
                                                const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sym + sym.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError(std::string(who) + ": eigensolver failed");
  const Index n = sym.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return eig.eigenvalues()(a) > eig.eigenvalues()(b); });
  Vector values(p);
  Matrix vectors(n, p);
  for (Index k = 0; k < p; ++k) {
    const double lambda = eig.eigenvalues()(order[static_cast<std::size_t>(k)]);
    if (lambda <= 0.0)
      throw DegenerateGeometryError(std::string(who) + ": fewer than P positive eigenvalues");
    Vector v = eig.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    values(k) = lambda;
    vectors.col(k) = v;
  }
  return {std::move(values), std::move(vectors)};
}

}  // namespace detail

/// Classical MDS: X_hat = Lambda^{1/2} V' from the top-P eigenpairs of B0,
/// the best rank-P PSD approximation in Frobenius norm.
inline PositionEstimate mds_position(const Matrix& b0, Index p) {
  if (b0.rows() != b0.cols()) throw ConfigError("mds_position: B0 must be square");
  if (p >= b0.rows()) throw ConfigError("mds_position: require P < N");
  auto [values, vectors] = detail::top_eigenpairs(b0, p, "mds_position");
  PositionEstimate out;
  out.eigenvalues_used = values;
  out.X_hat = values.cwiseSqrt().asDiagonal() * vectors.transpose();
  out.residual = (b0 - out.X_hat.transpose() * out.X_hat).norm();
  return out;
}

/// Orthogonal Procrustes: rotation (reflections allowed) minimizing
/// ||Q * estimate - reference||_F, via the SVD of reference * estimate'.
inline std::pair<Matrix, Matrix> procrustes_align(const Matrix& estimate,
                                                  const Matrix& reference) {
  if (estimate.rows() != reference.rows() || estimate.cols() != reference.cols())
    throw ConfigError("procrustes_align: shape mismatch");
  Eigen::JacobiSVD<Matrix> svd(reference * estimate.transpose(),
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix q = svd.matrixU() * svd.matrixV().transpose();
  return {q * estimate, q};
}

}  // namespace kinemds

#endif
