#ifndef KINEMDS_LINALG_HPP
#define KINEMDS_LINALG_HPP

#include <Eigen/Dense>
#include <iostream>
#include <optional>
#include <string>
#include <utility>

#include "kinemds/errors.hpp"

namespace kinemds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

constexpr double kRankCutoff = 1e-10;  // relative singular-value cutoff shared project-wide

/// vec(A): columns stacked top-to-bottom.
inline Vector vec(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

/// Inverse of vec for a known shape.
inline Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw ConfigError("unvec: size mismatch");
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

/// Kronecker product A (x) B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Vertical stack [a; b].
inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) throw ConfigError("vstack: column mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

inline Vector vcat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out.head(a.size()) = a;
  out.tail(b.size()) = b;
  return out;
}

/// P = I - n^{-1} 11^T. Symmetric, idempotent, annihilates constant vectors.
inline Matrix centering_matrix(Index n) {
  if (n < 1) throw ConfigError("centering_matrix: n must be >= 1");
  Matrix p = Matrix::Identity(n, n);
  p.array() -= 1.0 / static_cast<double>(n);
  return p;
}

/// Commutation matrix J with J vec(A) = vec(A^T) for every n x n matrix A.
inline Matrix commutation_matrix(Index n) {
  if (n < 1) throw ConfigError("commutation_matrix: n must be >= 1");
  Matrix j = Matrix::Zero(n * n, n * n);
  for (Index q = 0; q < n * n; ++q) {
    const Index row = q % n;
    const Index col = q / n;
    j(q, row * n + col) = 1.0;  // vec(A^T)[q] = A(col-of-A^T, row-of-A^T)
  }
  return j;
}

/// Moore-Penrose pseudo-inverse; singular values below tol*sigma_max are dropped.
inline Matrix pseudo_inverse(const Matrix& m, double tol = kRankCutoff) {
  if (m.size() == 0) return m.transpose();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = tol * (sv.size() > 0 ? sv(0) : 0.0);
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Count of singular values above tol*sigma_max.
inline Index numeric_rank(const Matrix& m, double tol = kRankCutoff) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * sv(0)) ++r;
  return r;
}

/// Orthonormal basis for the null space of C (columns span {y : Cy = 0}).
inline Matrix nullspace_basis(const Matrix& c, double tol = kRankCutoff) {
  if (c.rows() == 0) return Matrix::Identity(c.cols(), c.cols());
  Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double cutoff = (sv.size() > 0 ? sv(0) : 0.0) * tol;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  return svd.matrixV().rightCols(c.cols() - rank);
}

/// Symmetric PSD square root; negative eigenvalues are clipped at zero.
inline Matrix psd_sqrt(const Matrix& w, double tol = kRankCutoff) {
  if (w.rows() != w.cols()) throw ConfigError("psd_sqrt: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (w + w.transpose()));
  const Vector& ev = eig.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (scale > 0.0 && ev.minCoeff() < -1e-6 * scale)
    std::cerr << "psd_sqrt: clipping negative eigenvalue " << ev.minCoeff() << "\n";
  Vector root = Vector::Zero(ev.size());
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) > tol * scale) root(i) = std::sqrt(ev(i));
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

/// Symmetrize and clip negative eigenvalues so the result is PSD.
inline Matrix clip_psd(const Matrix& m, double tol = kRankCutoff) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  Vector ev = eig.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) < tol * scale) ev(i) = 0.0;
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

/// Equality-constrained (optionally weighted) least-squares problem
///   min ||W^{1/2}(A y - b)||^2  s.t.  C y = d.
struct ConstrainedLsProblem {
  Matrix design;                  // A, equations x unknowns
  Vector rhs;                     // b
  Matrix constraint_lhs;          // C, constraints x unknowns (may have 0 rows)
  Vector constraint_rhs;          // d
  std::optional<Matrix> weight;   // W, symmetric PSD

  void validate() const {
    if (design.cols() != constraint_lhs.cols())
      throw ConfigError("ConstrainedLsProblem: design/constraint column mismatch");
    if (rhs.size() != design.rows())
      throw ConfigError("ConstrainedLsProblem: rhs length mismatch");
    if (constraint_rhs.size() != constraint_lhs.rows())
      throw ConfigError("ConstrainedLsProblem: constraint rhs length mismatch");
    if (weight && (weight->rows() != design.rows() || weight->cols() != design.rows()))
      throw ConfigError("ConstrainedLsProblem: weight dimension mismatch");
  }
};

struct KktSolution {
  Vector solution;
  Vector multipliers;
};

/// Solves the saddle-point system
///   [2A^T A  C^T] [y]   [2A^T b]
///   [C        0 ] [l] = [d]
/// via a pivoted LU factorization. Weighted problems are folded in through the
/// symmetric PSD square root of the weight.
inline KktSolution solve_kkt(const ConstrainedLsProblem& p) {
  p.validate();
  Matrix a = p.design;
  Vector b = p.rhs;
  if (p.weight) {
    const Matrix half = psd_sqrt(*p.weight);
    a = half * a;
    b = half * b;
  }
  const Index n = a.cols();
  const Index nc = p.constraint_lhs.rows();

  {
    Matrix stacked(a.rows() + nc, n);
    stacked.topRows(a.rows()) = a;
    stacked.bottomRows(nc) = p.constraint_lhs;
    if (numeric_rank(stacked) < n)
      throw RankDeficiencyError(
          "solve_kkt: stacked [design; constraints] is column-rank deficient "
          "(insufficient constraints for the design nullspace)");
  }

  const Matrix h = 2.0 * a.transpose() * a;
  // Equilibrate the constraint block against the normal-equations block so a
  // relative pivot threshold treats both on the same footing.
  const double scale = std::max(1.0, std::sqrt(h.diagonal().cwiseAbs().maxCoeff()));
  Matrix kkt = Matrix::Zero(n + nc, n + nc);
  kkt.topLeftCorner(n, n) = h;
  kkt.topRightCorner(n, nc) = scale * p.constraint_lhs.transpose();
  kkt.bottomLeftCorner(nc, n) = scale * p.constraint_lhs;
  Vector rhs(n + nc);
  rhs.head(n) = 2.0 * a.transpose() * b;
  rhs.tail(nc) = scale * p.constraint_rhs;

  Eigen::FullPivLU<Matrix> lu(kkt);
  lu.setThreshold(kRankCutoff);
  if (!lu.isInvertible()) {
    const std::string block =
        numeric_rank(p.constraint_lhs) < nc ? "constraint block" : "normal-equations block";
    throw RankDeficiencyError("solve_kkt: singular KKT matrix (" + block + ")");
  }
  const Vector yl = lu.solve(rhs);

  KktSolution out{yl.head(n), scale * yl.tail(nc)};
  const double cres = (p.constraint_lhs * out.solution - p.constraint_rhs).norm();
  if (cres > 1e-10 * (1.0 + p.constraint_rhs.norm()))
    throw NumericalError("solve_kkt: constraint residual too large");
  return out;
}

}  // namespace kinemds

#endif
