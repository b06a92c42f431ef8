#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace aes {

// One explicit, seedable generator is passed into every stochastic
// operation; there is no hidden global state anywhere in the library.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

// Uniform double in [0, 1). Hand-rolled so that streams depend only on the
// engine, not on the standard library's distribution implementation.
inline double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

// Box-Muller; deterministic given the engine stream.
inline double rand_normal(Rng& rng, double mean, double sd) {
  double u1 = rand_unit(rng);
  double u2 = rand_unit(rng);
  while (u1 <= 0.0) u1 = rand_unit(rng);
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(6.283185307179586476925287 * u2);
}

inline std::size_t rand_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

// Fisher-Yates, independent of std::shuffle's unspecified algorithm.
template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
  if (v.size() < 2) return;
  for (std::size_t i = v.size() - 1; i > 0; --i) {
    std::size_t j = rand_index(rng, i + 1);
    std::swap(v[i], v[j]);
  }
}

}  // namespace aes
