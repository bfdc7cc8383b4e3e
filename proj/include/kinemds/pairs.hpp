#ifndef KINEMDS_PAIRS_HPP
#define KINEMDS_PAIRS_HPP

#include <utility>
#include <vector>

#include "kinemds/errors.hpp"
#include "kinemds/linalg.hpp"

namespace kinemds {

/// Unique links (i,j), i<j, in pair-major order: (0,1),(0,2),...,(0,N-1),(1,2),...
inline std::vector<std::pair<Index, Index>> pair_list(Index n) {
  if (n < 2) throw ConfigError("pair_list: need at least two nodes");
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return pairs;
}

inline Index pair_count(Index n) { return n * (n - 1) / 2; }

/// Symmetric hollow N x N matrix from a pair-major vector.
inline Matrix pairs_to_matrix(const Vector& v, Index n) {
  if (v.size() != pair_count(n)) throw ConfigError("pairs_to_matrix: length mismatch");
  Matrix m = Matrix::Zero(n, n);
  Index p = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j, ++p) m(i, j) = m(j, i) = v(p);
  return m;
}

/// Pair-major vector of the strict upper triangle.
inline Vector matrix_to_pairs(const Matrix& m) {
  const Index n = m.rows();
  Vector v(pair_count(n));
  Index p = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j, ++p) v(p) = m(i, j);
  return v;
}

}  // namespace kinemds

#endif
