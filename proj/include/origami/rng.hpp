#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace origami {

// splitmix64; used to mix user seeds with stream/record indices so that
// worker count never changes which random stream a record sees.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x51ab2ee1a79b42dcULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) {
  return Rng(mix_seed(parts));
}

// Uniform in [0, n). Lemire-style rejection; stable across platforms, unlike
// std::uniform_int_distribution.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

// Uniform double in [0, 1) with 53-bit resolution.
inline double uniform_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller (no cached spare: keeps replay independent
// of call interleaving).
inline double normal_double(Rng& rng) {
  double u1 = 0.0;
  do {
    u1 = uniform_double(rng);
  } while (u1 <= 0.0);
  double u2 = uniform_double(rng);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace origami
