#pragma once

// Seed plumbing. Every random stream in the library is a std::mt19937_64
// seeded from a (master seed, index...) tuple so that trials and RANSAC
// iterations can be regenerated independently of evaluation order.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "catpose/geometry.hpp"

namespace catpose {

using RandomEngine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline RandomEngine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return RandomEngine(derive_seed(seed, keys));
}

/// Uniformly distributed rotation (normalized Gaussian quaternion).
inline Rotation random_rotation(RandomEngine& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const std::array<double, 4> q{n(rng), n(rng), n(rng), n(rng)};
    const double norm2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (norm2 > 1e-12) return Rotation::from_quaternion(q);
  }
}

inline Vec3 random_unit_vector(RandomEngine& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

}  // namespace catpose
