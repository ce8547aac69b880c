#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>

namespace ics {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits of one generator draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline int uniform_index(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

// Poisson sample by sequential inversion of the CDF. One uniform per call.
inline int sample_poisson(double mean, Rng& rng) {
  if (!(mean >= 0.0) || mean > 700.0) {
    throw std::domain_error("poisson mean must lie in [0, 700]");
  }
  double u = uniform01(rng);
  double p = std::exp(-mean);
  double cdf = p;
  int k = 0;
  while (u >= cdf) {
    ++k;
    p *= mean / k;
    if (p == 0.0) break;
    cdf += p;
  }
  return k;
}

// Index drawn from a probability vector by inversion. One uniform per call.
inline int sample_categorical(std::span<const double> probs, Rng& rng) {
  double u = uniform01(rng);
  double cdf = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (u < cdf) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable seed for a named stream: FNV-1a of the key mixed with the base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h ^ splitmix64(base));
}

}  // namespace ics
