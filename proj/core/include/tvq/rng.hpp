#pragma once

#include <cmath>
#include <cstdint>

namespace tvq {

// Counter-free splitmix64 generator. Used everywhere instead of <random>
// so that streams are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Box-Muller; one value per call, the partner draw is discarded to keep
  // the stream position independent of call parity.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
};

// Stable mix of two seeds into one stream seed (per-sample substreams etc).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t h = 0xcbf29ce484222325ull ^ a;
  h *= 0x100000001b3ull;
  h ^= b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h *= 0x100000001b3ull;
  return h ? h : 1;
}

}  // namespace tvq
