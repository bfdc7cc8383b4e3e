#ifndef KINEMDS_SCENARIO_HPP
#define KINEMDS_SCENARIO_HPP

#include <cmath>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "kinemds/errors.hpp"
#include "kinemds/linalg.hpp"
#include "kinemds/pairs.hpp"

namespace kinemds {

/// Ground-truth node kinematics: positions X and derivative matrices Y_m,
/// all P x N, defining the trajectory
///   S(t) = X + sum_m (m!)^-1 Y_m (t - t0)^m.
struct KinematicEnsemble {
  Index dims = 0;                  // P
  Index nodes = 0;                 // N
  Matrix X;                        // meters
  std::vector<Matrix> derivatives; // Y_1 (m/s), Y_2 (m/s^2), ...
  double t0 = 0.0;                 // seconds

  void validate() const {
    if (dims < 1 || nodes <= dims)
      throw ConfigError("KinematicEnsemble: require N > P >= 1");
    if (X.rows() != dims || X.cols() != nodes)
      throw ConfigError("KinematicEnsemble: X must be P x N");
    for (const auto& y : derivatives)
      if (y.rows() != dims || y.cols() != nodes)
        throw ConfigError("KinematicEnsemble: derivative matrix must be P x N");
    if (!X.allFinite()) throw ConfigError("KinematicEnsemble: non-finite entries in X");
    for (const auto& y : derivatives)
      if (!y.allFinite()) throw ConfigError("KinematicEnsemble: non-finite derivative entries");
  }
};

/// Centered counterpart: each matrix right-multiplied by the centering matrix.
struct RelativeState {
  Matrix X_rel;
  std::vector<Matrix> derivatives_rel;
};

struct Edm {
  Matrix D;  // N x N, symmetric, hollow
};

/// Pairwise distance derivatives at t0, both matrix and pair-major vector forms.
struct RangeParameterSet {
  Index order = 0;               // number of stored derivative levels (L)
  Matrix R, Rdot, Rddot;         // N x N; Rdot/Rddot zero-sized when order < 2/3
  Vector r, rdot, rddot;         // pair-major

  Index nodes() const { return R.rows(); }
};

/// S(t) evaluated by the exact Taylor polynomial.
inline Matrix evaluate_trajectory(const KinematicEnsemble& e, double t) {
  if (!std::isfinite(t)) throw ConfigError("evaluate_trajectory: non-finite t");
  Matrix s = e.X;
  double power = 1.0, factorial = 1.0;
  for (std::size_t m = 0; m < e.derivatives.size(); ++m) {
    power *= (t - e.t0);
    factorial *= static_cast<double>(m + 1);
    s += (power / factorial) * e.derivatives[m];
  }
  return s;
}

inline RelativeState relative_state(const KinematicEnsemble& e) {
  const Matrix p = centering_matrix(e.nodes);
  RelativeState out;
  out.X_rel = e.X * p;
  out.derivatives_rel.reserve(e.derivatives.size());
  for (const auto& y : e.derivatives) out.derivatives_rel.push_back(y * p);
  return out;
}

inline Edm edm_of_positions(const Matrix& s) {
  const Index n = s.cols();
  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (s.col(i) - s.col(j)).norm();
  return Edm{std::move(d)};
}

inline Edm edm_at(const KinematicEnsemble& e, double t) {
  return edm_of_positions(evaluate_trajectory(e, t));
}

/// Closed-form range parameters at t0:
///   r = |delta|, rdot = delta.deltadot / r,
///   rddot = (|deltadot|^2 + delta.deltaddot)/r - rdot^2/r.
/// Coincident nodes are rejected (r appears in denominators downstream).
inline RangeParameterSet range_derivative_oracle(const KinematicEnsemble& e, Index order = 2) {
  if (order > 2) throw ConfigError("range_derivative_oracle: closed form implemented for order <= 2");
  const Index n = e.nodes;
  const Matrix zero = Matrix::Zero(e.dims, n);
  const Matrix& y1 = e.derivatives.size() > 0 ? e.derivatives[0] : zero;
  const Matrix& y2 = e.derivatives.size() > 1 ? e.derivatives[1] : zero;

  Matrix r = Matrix::Zero(n, n), rd = Matrix::Zero(n, n), rdd = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Vector delta = e.X.col(i) - e.X.col(j);
      const double dist = delta.norm();
      if (dist <= 0.0)
        throw DegenerateGeometryError("range_derivative_oracle: coincident nodes " +
                                      std::to_string(i) + "," + std::to_string(j));
      r(i, j) = r(j, i) = dist;
      if (order >= 1) {
        const Vector ddelta = y1.col(i) - y1.col(j);
        const double rate = delta.dot(ddelta) / dist;
        rd(i, j) = rd(j, i) = rate;
        if (order >= 2) {
          const Vector dddelta = y2.col(i) - y2.col(j);
          const double acc = (ddelta.squaredNorm() + delta.dot(dddelta)) / dist -
                             rate * rate / dist;
          rdd(i, j) = rdd(j, i) = acc;
        }
      }
    }

  RangeParameterSet out;
  out.order = order + 1;
  out.R = r;
  out.r = matrix_to_pairs(r);
  if (order >= 1) { out.Rdot = rd; out.rdot = matrix_to_pairs(rd); }
  if (order >= 2) { out.Rddot = rdd; out.rddot = matrix_to_pairs(rdd); }
  return out;
}

/// Independent finite-difference check of the range derivatives:
/// 5-point central stencils with one Richardson step. The default step keeps
/// the second-derivative stencil's roundoff (~eps*|D|/h^2) below truncation.
inline RangeParameterSet range_derivative_fd(const KinematicEnsemble& e, double h = 1e-2) {
  const Index n = e.nodes;
  auto d_at = [&](double t) { return edm_at(e, t).D; };
  auto stencil1 = [&](double step) -> Matrix {
    return (8.0 * (d_at(e.t0 + step) - d_at(e.t0 - step)) -
            (d_at(e.t0 + 2 * step) - d_at(e.t0 - 2 * step))) / (12.0 * step);
  };
  auto stencil2 = [&](double step) -> Matrix {
    return (-(d_at(e.t0 + 2 * step) + d_at(e.t0 - 2 * step)) +
            16.0 * (d_at(e.t0 + step) + d_at(e.t0 - step)) - 30.0 * d_at(e.t0)) /
           (12.0 * step * step);
  };
  // Richardson: stencils are O(h^4); combine h and h/2 evaluations.
  const Matrix rd = (16.0 * stencil1(h / 2) - stencil1(h)) / 15.0;
  const Matrix rdd = (16.0 * stencil2(h / 2) - stencil2(h)) / 15.0;

  RangeParameterSet out;
  out.order = 3;
  out.R = d_at(e.t0);
  out.Rdot = rd;
  out.Rddot = rdd;
  out.r = matrix_to_pairs(out.R);
  out.rdot = matrix_to_pairs(rd);
  out.rddot = matrix_to_pairs(rdd);
  out.R.diagonal().setZero();
  out.Rdot.diagonal().setZero();
  out.Rddot.diagonal().setZero();
  return out;
}

/// Reference scenario: N=10 nodes in the plane with fixed position, velocity
/// and acceleration tables; nodes 1 and 2 share identical kinematics.
inline KinematicEnsemble reference_scenario() {
  KinematicEnsemble e;
  e.dims = 2;
  e.nodes = 10;
  e.t0 = 0.0;
  e.X = Matrix(2, 10);
  e.X << -244, 385, 81, -19, -792, -554, -965, -985, -49, -503,
         -588, -456, -992, -730, 879, 970, 155, 318, -858, 419;
  Matrix y1(2, 10);
  y1 << -5, -5, -6, 6, -1, 2, 1, -5, 9, -5,
        -8, -8, -7, -9, -3, -2, -2, -10, 2, -1;
  Matrix y2(2, 10);
  y2 << -0.17, -0.17, 0.22, -0.07, 0.21, -0.15, 0.55, -0.72, -0.49, -0.34,
         0.42, 0.42, 0.98, 0.73, 0.48, 0.08, -0.43, -0.14, 0.56, 0.91;
  e.derivatives = {y1, y2};
  e.validate();
  return e;
}

// Scenario file I/O. Layout: rows = coordinates, columns = nodes, SI units.

inline nlohmann::json ensemble_to_json(const KinematicEnsemble& e) {
  auto rows = [](const Matrix& m) {
    std::vector<std::vector<double>> out(m.rows());
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) out[r].push_back(m(r, c));
    return out;
  };
  nlohmann::json j;
  j["dims"] = e.dims;
  j["nodes"] = e.nodes;
  j["t0"] = e.t0;
  j["X"] = rows(e.X);
  std::vector<std::vector<std::vector<double>>> ys;
  for (const auto& y : e.derivatives) ys.push_back(rows(y));
  j["Y"] = ys;
  return j;
}

inline KinematicEnsemble ensemble_from_json(const nlohmann::json& j) {
  auto matrix = [](const nlohmann::json& rows, Index p, Index n) {
    if (static_cast<Index>(rows.size()) != p) throw ConfigError("scenario: wrong row count");
    Matrix m(p, n);
    for (Index r = 0; r < p; ++r) {
      if (static_cast<Index>(rows[r].size()) != n) throw ConfigError("scenario: ragged matrix");
      for (Index c = 0; c < n; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
  };
  KinematicEnsemble e;
  e.dims = j.at("dims").get<Index>();
  e.nodes = j.at("nodes").get<Index>();
  e.t0 = j.value("t0", 0.0);
  e.X = matrix(j.at("X"), e.dims, e.nodes);
  for (const auto& y : j.value("Y", nlohmann::json::array()))
    e.derivatives.push_back(matrix(y, e.dims, e.nodes));
  e.validate();
  return e;
}

inline KinematicEnsemble load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  nlohmann::json j;
  in >> j;
  return ensemble_from_json(j);
}

}  // namespace kinemds

#endif
