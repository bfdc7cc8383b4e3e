#ifndef KINEMDS_GTWR_HPP
#define KINEMDS_GTWR_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinemds/rng.hpp"
#include "kinemds/scenario.hpp"

namespace kinemds {

constexpr double kSpeedOfLight = 3.0e8;  // m/s, free space

enum class DelayModel {
  Geometric,            // exact distance at the transmit time
  PolynomialTruncated,  // delay truncated to its degree-(L-1) Taylor polynomial at T0
};

/// Per-link transmit/receive markers of K two-way exchanges.
struct TimestampTable {
  Index nodes = 0;
  Index exchanges = 0;  // K
  double T0 = 0.0;
  double c = kSpeedOfLight;
  std::vector<std::pair<Index, Index>> pairs;  // (i,j), i<j, pair-major
  std::vector<Vector> transmit;                // per pair, K entries (seconds)
  std::vector<Vector> receive;                 // per pair, K entries (seconds)
};

/// Noisy propagation delays, pair-major and exchange-minor, with the
/// (isotropic) per-delay noise variance.
struct DelayMeasurements {
  Vector tau;                   // seconds, length Nbar*K
  double noise_variance = 0.0;  // seconds^2, per delay (Sigma = variance * I)

  Matrix noise_covariance() const {
    return noise_variance * Matrix::Identity(tau.size(), tau.size());
  }
};

/// K transmit times linearly spaced over the interval; receive time adds the
/// propagation delay, with the distance held constant over the flight.
inline TimestampTable generate_timestamps(const KinematicEnsemble& e, Index K,
                                          std::pair<double, double> interval, double T0,
                                          DelayModel model = DelayModel::Geometric,
                                          Index truncation_order = 3,
                                          double c = kSpeedOfLight) {
  if (K < 1) throw ConfigError("generate_timestamps: K must be >= 1");
  if (interval.first >= interval.second)
    throw ConfigError("generate_timestamps: interval start must precede end");

  TimestampTable t;
  t.nodes = e.nodes;
  t.exchanges = K;
  t.T0 = T0;
  t.c = c;
  t.pairs = pair_list(e.nodes);

  RangeParameterSet taylor;
  if (model == DelayModel::PolynomialTruncated) {
    if (truncation_order < 1 || truncation_order > 3)
      throw ConfigError("generate_timestamps: truncation order must be in [1,3]");
    taylor = range_derivative_oracle(e, truncation_order - 1);
  }

  const double span = interval.second - interval.first;
  for (std::size_t p = 0; p < t.pairs.size(); ++p) {
    const auto [i, j] = t.pairs[p];
    Vector tx(K), rx(K);
    for (Index k = 0; k < K; ++k) {
      const double time =
          K == 1 ? 0.5 * (interval.first + interval.second)
                 : interval.first + span * static_cast<double>(k) / static_cast<double>(K - 1);
      double delay;
      if (model == DelayModel::Geometric) {
        const Matrix s = evaluate_trajectory(e, time);
        delay = (s.col(i) - s.col(j)).norm() / c;
      } else {
        const double dt = time - T0;
        delay = taylor.R(i, j) / c;
        if (truncation_order >= 2) delay += taylor.Rdot(i, j) / c * dt;
        if (truncation_order >= 3) delay += 0.5 * taylor.Rddot(i, j) / c * dt * dt;
      }
      tx(k) = time;
      rx(k) = time + delay;
    }
    t.transmit.push_back(std::move(tx));
    t.receive.push_back(std::move(rx));
  }
  return t;
}

/// tau = |receive - transmit| + eta, eta i.i.d. N(0, (sigma_m/c)^2).
/// Noise is drawn from per-(pair, exchange) substreams of the seed.
inline DelayMeasurements measure_delays(const TimestampTable& t, double sigma_m,
                                        std::uint64_t seed) {
  if (sigma_m < 0.0) throw ConfigError("measure_delays: sigma_m must be >= 0");
  const double sigma_tau = sigma_m / t.c;
  DelayMeasurements out;
  out.noise_variance = sigma_tau * sigma_tau;
  out.tau.resize(static_cast<Index>(t.pairs.size()) * t.exchanges);
  for (std::size_t p = 0; p < t.pairs.size(); ++p)
    for (Index k = 0; k < t.exchanges; ++k) {
      double tau = std::abs(t.receive[p](k) - t.transmit[p](k));
      if (sigma_m > 0.0)
        tau += sigma_tau * rng::gaussian(rng::mix(rng::mix(seed, p), static_cast<std::uint64_t>(k)));
      out.tau(static_cast<Index>(p) * t.exchanges + k) = tau;
    }
  return out;
}

/// Noise injected on the raw time markers instead of on the delays.
/// Each of the two markers of an exchange receives i.i.d. noise of standard
/// deviation sigma_m/(c*sqrt(2)), so the differenced delay noise has standard
/// deviation sigma_m/c, matching the additive-delay model it approximates.
inline TimestampTable perturb_timestamps(const TimestampTable& t, double sigma_m,
                                         std::uint64_t seed) {
  if (sigma_m < 0.0) throw ConfigError("perturb_timestamps: sigma_m must be >= 0");
  const double sigma_marker = sigma_m / (t.c * std::sqrt(2.0));
  TimestampTable noisy = t;
  for (std::size_t p = 0; p < t.pairs.size(); ++p)
    for (Index k = 0; k < t.exchanges; ++k) {
      const std::uint64_t key = rng::mix(rng::mix(seed, p), static_cast<std::uint64_t>(k));
      noisy.transmit[p](k) += sigma_marker * rng::gaussian(rng::mix(key, 1));
      noisy.receive[p](k) += sigma_marker * rng::gaussian(rng::mix(key, 2));
    }
  return noisy;
}

// Timestamp log: CSV `i,j,k,t_transmit,t_receive` plus a JSON sidecar with T0 and c.

inline void save_timestamps(const TimestampTable& t, const std::string& csv_path,
                            const std::string& sidecar_path) {
  std::ofstream out(csv_path);
  if (!out) throw ConfigError("cannot write " + csv_path);
  out << "i,j,k,t_transmit,t_receive\n";
  char buf[128];
  for (std::size_t p = 0; p < t.pairs.size(); ++p)
    for (Index k = 0; k < t.exchanges; ++k) {
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.17g,%.17g\n",
                    static_cast<long long>(t.pairs[p].first + 1),
                    static_cast<long long>(t.pairs[p].second + 1),
                    static_cast<long long>(k + 1), t.transmit[p](k), t.receive[p](k));
      out << buf;
    }
  nlohmann::json side{{"T0", t.T0}, {"c", t.c}};
  std::ofstream sc(sidecar_path);
  if (!sc) throw ConfigError("cannot write " + sidecar_path);
  sc << side.dump(2) << "\n";
}

inline TimestampTable load_timestamps(const std::string& csv_path,
                                      const std::string& sidecar_path) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open " + csv_path);
  std::string line;
  std::getline(in, line);  // header
  struct Row { Index i, j, k; double tx, rx; };
  std::vector<Row> rows;
  Index max_node = 0, max_k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    if (!(ss >> r.i >> r.j >> r.k >> r.tx >> r.rx))
      throw ConfigError("malformed timestamp row: " + line);
    --r.i; --r.j; --r.k;
    max_node = std::max(max_node, std::max(r.i, r.j) + 1);
    max_k = std::max(max_k, r.k + 1);
    rows.push_back(r);
  }
  TimestampTable t;
  t.nodes = max_node;
  t.exchanges = max_k;
  t.pairs = pair_list(max_node);
  t.transmit.assign(t.pairs.size(), Vector::Zero(max_k));
  t.receive.assign(t.pairs.size(), Vector::Zero(max_k));
  auto pair_index = [&](Index i, Index j) {
    // pair-major position of (i,j), i<j
    return i * (2 * max_node - i - 1) / 2 + (j - i - 1);
  };
  for (const auto& r : rows) {
    const Index p = pair_index(std::min(r.i, r.j), std::max(r.i, r.j));
    t.transmit[static_cast<std::size_t>(p)](r.k) = r.tx;
    t.receive[static_cast<std::size_t>(p)](r.k) = r.rx;
  }
  std::ifstream sc(sidecar_path);
  if (sc) {
    nlohmann::json side;
    sc >> side;
    t.T0 = side.value("T0", 0.0);
    t.c = side.value("c", kSpeedOfLight);
  }
  return t;
}

}  // namespace kinemds

#endif
