#ifndef KINEMDS_ABS_KINEMATICS_HPP
#define KINEMDS_ABS_KINEMATICS_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "kinemds/rel_kinematics.hpp"

namespace kinemds {

/// One known absolute kinematic entry: Y_M(coord, node) = value (0-based).
struct AnchorEntry {
  Index node = 0;
  Index coord = 0;
  double value = 0.0;
};

/// Vectorized generalized Lyapunov-like system A y = b,
///   A = (I_{N^2} + J)(P (x) X'),  so  A vec(Y) = vec(X'YP + PY'X).
struct GeneralizedSystem {
  Matrix A;                      // N^2 x NP
  Vector b;                      // N^2
  Matrix constraint_lhs;         // rows x NP (selector rows)
  Vector constraint_rhs;
  std::optional<Matrix> weight;  // N^2 x N^2
  Index dims = 0, nodes = 0;
};

inline GeneralizedSystem build_generalized_system(const Matrix& x_hat,
                                                  const MeasurementMatrix& bm) {
  const Index p = x_hat.rows();
  const Index n = x_hat.cols();
  if (bm.B.rows() != n || bm.B.cols() != n)
    throw ConfigError("build_generalized_system: B_M must be N x N");
  const Matrix j = commutation_matrix(n);
  const Matrix k = kron(centering_matrix(n), x_hat.transpose());
  GeneralizedSystem sys;
  sys.A = k + j * k;
  sys.b = vec(bm.B);
  sys.constraint_lhs = Matrix::Zero(0, n * p);
  sys.constraint_rhs = Vector::Zero(0);
  sys.dims = p;
  sys.nodes = n;
  return sys;
}

/// Selector constraints pinning individual entries of vec(Y); at least
/// P(P+1)/2 independent entries are required to close the rank gap.
inline std::pair<Matrix, Vector> anchor_constraints(const std::vector<AnchorEntry>& entries,
                                                    Index p, Index n) {
  const Index needed = p * (p + 1) / 2;
  if (static_cast<Index>(entries.size()) < needed)
    throw ConfigError("anchor_constraints: need at least " + std::to_string(needed) +
                      " anchored entries");
  Matrix c = Matrix::Zero(static_cast<Index>(entries.size()), n * p);
  Vector d(static_cast<Index>(entries.size()));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.node < 0 || e.node >= n || e.coord < 0 || e.coord >= p)
      throw ConfigError("anchor_constraints: entry index out of range");
    c(static_cast<Index>(k), e.node * p + e.coord) = 1.0;
    d(static_cast<Index>(k)) = e.value;
  }
  if (numeric_rank(c) < static_cast<Index>(entries.size()))
    throw ConfigError("anchor_constraints: duplicate anchored entries");
  return {std::move(c), std::move(d)};
}

/// Anchor the full kinematic state of the listed nodes (all P coordinates).
inline std::vector<AnchorEntry> anchor_nodes(const std::vector<Index>& nodes,
                                             const Matrix& y_true) {
  std::vector<AnchorEntry> entries;
  for (Index node : nodes)
    for (Index coord = 0; coord < y_true.rows(); ++coord)
      entries.push_back({node, coord, y_true(coord, node)});
  return entries;
}

namespace detail {

inline KinematicEstimate solve_generalized(const GeneralizedSystem& sys, Index order,
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

/// Constrained generalized least squares (absolute kinematics).
inline KinematicEstimate glls(const GeneralizedSystem& sys, Index order = 1) {
  return detail::solve_generalized(sys, order, KinematicMethod::GLLS, false);
}

inline KinematicEstimate wglls(const GeneralizedSystem& sys, Index order = 1) {
  return detail::solve_generalized(sys, order, KinematicMethod::WGLLS, true);
}

// Anchor file: JSON {"type":"anchored","order":M,"entries":[{"node","coord","value"}]}
// with 1-based node and coordinate indices on disk.

inline std::vector<AnchorEntry> load_anchors(const std::string& path, Index* order_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid anchor JSON: " + std::string(e.what()));
  }
  if (j.value("type", "") != "anchored") throw ConfigError("anchor file: type must be 'anchored'");
  if (order_out) *order_out = j.value("order", Index{1});
  std::vector<AnchorEntry> entries;
  for (const auto& e : j.at("entries"))
    entries.push_back({e.at("node").get<Index>() - 1, e.at("coord").get<Index>() - 1,
                       e.at("value").get<double>()});
  return entries;
}

inline void save_anchors(const std::vector<AnchorEntry>& entries, Index order,
                         const std::string& path) {
  nlohmann::json j{{"type", "anchored"}, {"order", order}};
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries)
    j["entries"].push_back({{"node", e.node + 1}, {"coord", e.coord + 1}, {"value", e.value}});
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace kinemds

#endif
