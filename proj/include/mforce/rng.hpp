#pragma once

// Counter-keyed random streams: every draw is a pure function of
// (master seed, stream tag, index), so serial and parallel runs agree.

#include "mforce/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace mforce {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

enum class StreamTag : std::uint64_t {
  bath_state = 1,
  product_system = 2,
  product_bath = 3,
  lanczos_start = 4,
  repeat = 5,
};

inline std::uint64_t stream_seed(std::uint64_t master, StreamTag tag, std::uint64_t index) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(tag)), index);
}

/// Complex standard Gaussian vector: real and imaginary parts each have
/// variance 1/2, so E[v v^dagger] = I.
inline CVector complex_gaussian(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  CVector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double re = normal(engine);
    const double im = normal(engine);
    v(i) = Complex(re, im);
  }
  return v;
}

}  // namespace mforce
