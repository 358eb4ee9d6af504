#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace prevfuse {

/// Mixes a seed with a salt to derive decorrelated substream seeds
/// (splitmix64 finalizer). Plain XOR of nearby seeds would produce
/// heavily overlapping mt19937 states.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic random stream. Distributions are generated explicitly
/// (not via std:: distribution objects) so that the byte-level sample
/// sequence depends only on the seed, not on the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Binomial by direct Bernoulli summation. Denominators in prevalence
  /// records are small, so this is not a bottleneck.
  int binomial(int m, double p) {
    int y = 0;
    for (int k = 0; k < m; ++k) y += (uniform() < p) ? 1 : 0;
    return y;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace prevfuse
