#pragma once

// Seeded random streams. All sampling goes through uniform01() so that the
// generator (mt19937_64) and the bit-to-double mapping are pinned in one
// place; trajectories with the same seed are bit-identical across runs.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace pomdpgrad {

// splitmix64, used to derive per-trajectory seeds from (base seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Index into an (unnormalized is not allowed) probability vector.
  int categorical(std::span<const double> p) {
    const double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
  }

  double exponential(double rate) {
    // inverse CDF; avoids log(0)
    double u = uniform01();
    if (u >= 1.0) u = 0.9999999999999999;
    return -std::log1p(-u) / rate;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace pomdpgrad
