#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace polalign {

/// Engine used for all stochastic steps. std::mt19937_64 output is fully
/// specified by the standard, and every draw below is built from raw engine
/// output, so streams are reproducible across standard library vendors.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

/// Poisson variate by multiplication of uniforms. Large means are split into
/// chunks so exp(-chunk) stays far from underflow.
inline std::uint64_t poisson(Rng& rng, double mean) {
  constexpr double kChunk = 50.0;
  std::uint64_t total = 0;
  while (mean > 0.0) {
    const double part = mean > kChunk ? kChunk : mean;
    mean -= part;
    const double limit = std::exp(-part);
    double prod = uniform01(rng);
    while (prod > limit) {
      ++total;
      prod *= uniform01(rng);
    }
  }
  return total;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a sequence of words into one seed; order-sensitive.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

}  // namespace polalign
