#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ous/detmath.hpp"

namespace ous {

// Counter-free splitmix64 stream. Chosen for cross-platform byte determinism:
// the state transition and output mix use only 64-bit integer arithmetic.
// The corpus manifest records this algorithm name so generated data can be
// audited against an independent implementation.
inline constexpr std::string_view kRngAlgorithm =
    "splitmix64; normal=box-muller; substream(seed,tag)=splitmix64(seed xor fnv1a64(tag))";

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; second value cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * detmath::log(u1));
    double a = 6.2831853071795864769 * u2;
    spare_ = r * detmath::sin(a);
    has_spare_ = true;
    return r * detmath::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Deterministic substream: one logical stream per (seed, tag) pair, used for
// per-clip generation and per-parameter initialization so results do not
// depend on iteration order.
inline uint64_t substream_seed(uint64_t seed, std::string_view tag) {
  SplitMix64 mixer(seed ^ fnv1a64(tag));
  return mixer.next();
}

inline SplitMix64 substream(uint64_t seed, std::string_view tag) {
  return SplitMix64(substream_seed(seed, tag));
}

// Deterministic Fisher-Yates shuffle over indices.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ous
