// Deterministic random sampling for reproducible Monte Carlo.
//
// Every distribution is hand-specified on top of std::mt19937_64 instead of
// going through std::*_distribution, whose algorithms are implementation
// defined. With a fixed seed the draw sequence here is identical on every
// platform, which is what makes simulation outputs byte-reproducible.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace abhmm {

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// SplitMix64 finalizer over (master_seed, stream). Derives well-separated
// per-run seeds so parallel scheduling can never change which numbers a run
// sees; stream k always maps to the same seed for a given master seed.
inline std::uint64_t mix_seed(std::uint64_t master_seed, std::uint64_t stream) {
  std::uint64_t z = master_seed + (stream + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t reject_below = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= reject_below) return static_cast<int>(r % bound);
    }
  }

  // Standard normal via Box-Muller. Consumes exactly two engine draws per
  // call and keeps no cached state, so the stream position is predictable.
  double normal() {
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Gaussian conditioned on [lo, hi]. Rejection is exact and fast whenever the
  // window holds non-negligible mass; a deterministic inverse-CDF bisection
  // takes over if 1000 proposals miss, so the draw count stays bounded.
  double truncated_normal(double mean, double sigma, double lo, double hi) {
    if (!(sigma > 0.0)) throw std::invalid_argument("truncated_normal: sigma must be positive");
    if (!(lo < hi)) throw std::invalid_argument("truncated_normal: requires lo < hi");
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double draw = normal(mean, sigma);
      if (draw >= lo && draw <= hi) return draw;
    }
    const double cdf_lo = normal_cdf((lo - mean) / sigma);
    const double cdf_hi = normal_cdf((hi - mean) / sigma);
    const double target = cdf_lo + (cdf_hi - cdf_lo) * uniform01();
    double a = lo, b = hi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      (normal_cdf((mid - mean) / sigma) < target ? a : b) = mid;
    }
    return 0.5 * (a + b);
  }

 private:
  static constexpr double two_pi = 6.283185307179586476925286766559;
  std::mt19937_64 engine_;
};

}  // namespace abhmm
