#ifndef KINEMDS_RANGING_HPP
#define KINEMDS_RANGING_HPP

#include <cstdio>
#include <fstream>

#include "kinemds/gtwr.hpp"
#include "kinemds/linalg.hpp"
#include "kinemds/pairs.hpp"
#include "kinemds/scenario.hpp"

namespace kinemds {

/// Double-centered matrices built from the range parameters:
///   B0 = -1/2 P R.^2 P,  B1 = -P (R.*Rdot) P,  B2 = -P (R.*Rddot + Rdot.^2) P.
struct CenteredGramSet {
  Matrix B0, B1, B2;
};

/// Vandermonde-like regression matrix
///   V = [I_Nbar (x) 1_K | T | T.^2 | ...],  T = bdiag of per-pair (t_k - T0),
/// with tau ordered pair-major, exchange-minor to match.
inline std::pair<Matrix, Vector> build_vandermonde(const TimestampTable& t, Index L) {
  if (L < 1) throw ConfigError("build_vandermonde: L must be >= 1");
  if (t.exchanges < L)
    throw IdentifiabilityError("build_vandermonde: K < L, per-link system underdetermined");
  const Index nbar = static_cast<Index>(t.pairs.size());
  const Index K = t.exchanges;
  Matrix v = Matrix::Zero(nbar * K, nbar * L);
  Vector tau(nbar * K);
  for (Index p = 0; p < nbar; ++p)
    for (Index k = 0; k < K; ++k) {
      const Index row = p * K + k;
      const double dt = t.transmit[static_cast<std::size_t>(p)](k) - t.T0;
      double power = 1.0;
      for (Index l = 0; l < L; ++l) {
        v(row, l * nbar + p) = power;
        power *= dt;
      }
      tau(row) = std::abs(t.receive[static_cast<std::size_t>(p)](k) -
                          t.transmit[static_cast<std::size_t>(p)](k));
    }
  return {std::move(v), std::move(tau)};
}

/// Weighted least squares theta = (V' Sigma^-1 V)^-1 V' Sigma^-1 tau.
inline Vector estimate_theta(const Matrix& v, const Vector& tau_hat, const Matrix& sigma) {
  if (tau_hat.size() != v.rows()) throw ConfigError("estimate_theta: tau length mismatch");
  const Eigen::LDLT<Matrix> sig(sigma);
  if (sig.info() != Eigen::Success)
    throw IdentifiabilityError("estimate_theta: noise covariance not positive definite");
  const Matrix wv = sig.solve(v);
  const Matrix normal = v.transpose() * wv;
  Eigen::FullPivLU<Matrix> lu(normal);
  lu.setThreshold(kRankCutoff);
  if (!lu.isInvertible())
    throw IdentifiabilityError("estimate_theta: singular normal matrix (degenerate time spacing)");
  return lu.solve(v.transpose() * (sig.solve(tau_hat)));
}

/// Isotropic-noise fast path (Sigma = sigma^2 I): ordinary per-link LS,
/// algebraically identical to the block solve since Sigma is block diagonal.
inline Vector estimate_theta_per_link(const TimestampTable& t, const Vector& tau_hat, Index L) {
  if (t.exchanges < L)
    throw IdentifiabilityError("estimate_theta_per_link: K < L");
  const Index nbar = static_cast<Index>(t.pairs.size());
  const Index K = t.exchanges;
  if (tau_hat.size() != nbar * K) throw ConfigError("estimate_theta_per_link: tau length mismatch");
  Vector theta(nbar * L);
  Matrix vk(K, L);
  for (Index p = 0; p < nbar; ++p) {
    for (Index k = 0; k < K; ++k) {
      const double dt = t.transmit[static_cast<std::size_t>(p)](k) - t.T0;
      double power = 1.0;
      for (Index l = 0; l < L; ++l) {
        vk(k, l) = power;
        power *= dt;
      }
    }
    const Vector tau_p = tau_hat.segment(p * K, K);
    Eigen::FullPivLU<Matrix> lu(vk.transpose() * vk);
    lu.setThreshold(kRankCutoff);
    if (!lu.isInvertible())
      throw IdentifiabilityError("estimate_theta_per_link: degenerate time spacing on link " +
                                 std::to_string(p));
    const Vector coeff = lu.solve(vk.transpose() * tau_p);
    for (Index l = 0; l < L; ++l) theta(l * nbar + p) = coeff(l);
  }
  return theta;
}

/// Scale the Taylor coefficients into range parameters, r^(m) = c * m! * theta_m,
/// and symmetrize into hollow matrices.
inline RangeParameterSet theta_to_range_params(const Vector& theta, Index L, Index nodes,
                                               double c = kSpeedOfLight) {
  const Index nbar = pair_count(nodes);
  if (theta.size() != nbar * L) throw ConfigError("theta_to_range_params: length mismatch");
  RangeParameterSet out;
  out.order = L;
  double factorial = 1.0;
  for (Index l = 0; l < L && l < 3; ++l) {
    if (l > 0) factorial *= static_cast<double>(l);
    const Vector block = c * factorial * theta.segment(l * nbar, nbar);
    switch (l) {
      case 0: out.r = block; out.R = pairs_to_matrix(block, nodes); break;
      case 1: out.rdot = block; out.Rdot = pairs_to_matrix(block, nodes); break;
      case 2: out.rddot = block; out.Rddot = pairs_to_matrix(block, nodes); break;
    }
  }
  return out;
}

inline CenteredGramSet build_centered_grams(const RangeParameterSet& params) {
  const Index n = params.nodes();
  const Matrix p = centering_matrix(n);
  CenteredGramSet g;
  g.B0 = -0.5 * p * params.R.cwiseProduct(params.R) * p;
  if (params.order >= 2) g.B1 = -p * params.R.cwiseProduct(params.Rdot) * p;
  if (params.order >= 3)
    g.B2 = -p * (params.R.cwiseProduct(params.Rddot) + params.Rdot.cwiseProduct(params.Rdot)) * p;
  return g;
}

/// Convenience: full dynamic-ranging pass from a timestamp table.
inline RangeParameterSet dynamic_ranging(const TimestampTable& t, const Vector& tau_hat, Index L) {
  return theta_to_range_params(estimate_theta_per_link(t, tau_hat, L), L, t.nodes, t.c);
}

/// Range-parameter export: CSV `i,j,r,rdot,rddot` (1-based nodes, SI units).
inline void save_range_params(const RangeParameterSet& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "i,j,r,rdot,rddot\n";
  const Index n = params.nodes();
  char buf[160];
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.17g,%.17g\n",
                    static_cast<long long>(i + 1), static_cast<long long>(j + 1), params.R(i, j),
                    params.order >= 2 ? params.Rdot(i, j) : 0.0,
                    params.order >= 3 ? params.Rddot(i, j) : 0.0);
      out << buf;
    }
}

}  // namespace kinemds

#endif
