#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "volterra/common.hpp"

namespace volterra {

// Reproducibility scheme: every random draw comes from a stream keyed by
// (master seed, purpose, path index). Streams are derived by hashing, never
// by sharing engine state, so an ensemble is bit-identical no matter how
// paths are distributed over workers.

enum class StreamPurpose : std::uint64_t {
  kTimeChange = 0x74696d65,
  kBrownian = 0x62726f77,
  kPoisson = 0x706f6973,
  kProbe = 0x70726f62,
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

inline std::uint64_t derive_stream_seed(std::uint64_t master, StreamPurpose purpose,
                                        std::uint64_t index) {
  std::uint64_t s = detail::splitmix64(master ^ 0x5851f42d4c957f2dULL);
  s = detail::splitmix64(s ^ static_cast<std::uint64_t>(purpose));
  s = detail::splitmix64(s ^ index);
  return s;
}

// One stream = one engine plus hand-rolled samplers. The samplers avoid
// std::normal_distribution and friends on purpose: their draw sequences are
// implementation-defined, ours are pinned by this file.
class RngStream {
 public:
  RngStream(std::uint64_t master, StreamPurpose purpose, std::uint64_t index)
      : engine_(derive_stream_seed(master, purpose, index)) {}

  // Uniform on (0,1); never returns 0 so logs are safe.
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Exact Poisson sampling: Knuth multiplication for small means, recursive
  // halving above it (a sum of independent Poissons is Poisson).
  std::uint64_t poisson(double mean) {
    if (!(mean >= 0.0)) throw InvalidArgument("RngStream::poisson: mean must be >= 0");
    if (mean == 0.0) return 0;
    if (mean > 30.0) return poisson(mean * 0.5) + poisson(mean * 0.5);
    const double limit = std::exp(-mean);
    std::uint64_t n = 0;
    double prod = uniform();
    while (prod > limit) {
      ++n;
      prod *= uniform();
    }
    return n;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace volterra
