#pragma once

#include <cstdint>

#include "smoothlab/matrix.hpp"

namespace smoothlab {

/// SplitMix64 stream (Steele, Lea & Flood). Every seeded artifact in the
/// library draws from this generator so results depend on the seed alone.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  // Integer in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) noexcept {
    return lo + next() % (hi - lo + 1);
  }

 private:
  std::uint64_t state_;
};

/// Seed of trial `index` in a suite started from `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  SplitMix64 g(base ^ (0xd1b54a32d192ed03ULL * (index + 1)));
  return g.next();
}

/// Entries i.i.d. uniform in [-scale, scale]; scale == 0 yields exact zeros.
inline Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols,
                            double scale) {
  Matrix m(rows, cols);
  if (scale == 0.0) return m;
  for (double& x : m.data()) x = rng.uniform(-scale, scale);
  return m;
}

inline Vector random_vector(SplitMix64& rng, std::size_t n, double scale) {
  Vector v(n, 0.0);
  if (scale == 0.0) return v;
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace smoothlab
