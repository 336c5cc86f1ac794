#pragma once

#include <cmath>
#include <cstdint>

#include "cords/error.hpp"

namespace cords {

// Counter-based deterministic generator built on the splitmix64 finalizer.
// Draw i of a stream is a pure function of (seed, stream path, i), so results
// are reproducible on a platform regardless of call interleaving elsewhere.
//
// Stream-split rule: child = parent.stream(id) derives an independent
// substream keyed by mix(key ^ mix(id + GAMMA)). Callers document the ids
// they use; within this library:
//   sampling  : 0 = uniform points, 1 = center picks, 2 = proposal offsets,
//               3 = subsampling
//   gmm       : 0 = k-means++ seeding, k = fit for component count k
//   decode    : 0 = GMM resample, 1 = model selection
//   decode1d  : 0 = prior draws, 1 = Poisson counts
//   bench     : instance index, then 0 = RFF weights, 1 = phases,
//               2 = field samples, 3 = subsample, 4 = decode
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kGamma)) {}

  Rng stream(std::uint64_t id) const {
    Rng child(*this);
    child.key_ = mix(key_ ^ mix(id + kGamma));
    child.counter_ = 0;
    child.has_spare_ = false;
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  // Uniform on [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe to feed into log().
  double next_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Unbiased integer in [0, n) via Lemire rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
    unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0u - n) % n;
      while (lo < t) {
        m = static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; the sine partner is cached, so calls
  // consume uniforms in a fixed, reproducible pattern.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_open();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exact Poisson draw: Knuth product method below lambda = 10, Hormann's
  // PTRS transformed rejection above. Consumption is variable but the
  // sequence is fully determined by the stream state.
  std::uint64_t poisson(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw InvalidArgument("poisson: lambda must be finite and >= 0");
    if (lambda == 0.0) return 0;
    if (lambda < 10.0) {
      const double limit = std::exp(-lambda);
      std::uint64_t k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= next_open();
      } while (p > limit);
      return k - 1;
    }
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = next_double() - 0.5;
      const double v = next_open();
      const double us = 0.5 - std::fabs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          kf * loglam - lambda - std::lgamma(kf + 1.0))
        return static_cast<std::uint64_t>(kf);
    }
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cords
