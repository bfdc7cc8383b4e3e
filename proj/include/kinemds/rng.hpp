#ifndef KINEMDS_RNG_HPP
#define KINEMDS_RNG_HPP

#include <cmath>
#include <cstdint>

namespace kinemds::rng {

// Counter-based substreams: every draw is a pure function of the key chain,
// so results do not depend on iteration or thread schedule.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

/// Uniform double in (0,1), never exactly 0.
inline double uniform01(std::uint64_t key) {
  return (static_cast<double>(splitmix64(key) >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller; deterministic for a given key.
inline double gaussian(std::uint64_t key) {
  const double u1 = uniform01(mix(key, 0x6a09e667f3bcc908ULL));
  const double u2 = uniform01(mix(key, 0xbb67ae8584caa73bULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace kinemds::rng

#endif
