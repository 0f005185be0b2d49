#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace panoslam {

/// splitmix64; used everywhere randomness is needed so that runs are
/// reproducible bit-for-bit from a single seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  int range(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  /// Box-Muller without caching (two draws per call keeps the stream simple).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

/// Derives an independent stream for (seed, tag, index); used for per-frame
/// randomness so that resumed runs replay identically without storing engines.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
  Rng mix(seed ^ (tag * 0x9e3779b97f4a7c15ULL) ^ (index + 0x4cf5ad432745937fULL));
  mix.next_u64();
  return mix.next_u64();
}

}  // namespace panoslam
