#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "famnet/common.hpp"

namespace famnet {

// Deterministic splitmix64-based generator. Self-contained so that streams
// are reproducible independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ kGolden) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += kGolden);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    FAMNET_CHECK(n > 0, "uniform_int: empty range");
    // Rejection sampling to avoid modulo bias.
    uint64_t limit = ~uint64_t(0) - ~uint64_t(0) % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derives an independent stream from this seed and a list of tags.
  // Pure function of the inputs, does not advance this generator.
  static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    for (uint64_t t : tags) {
      h ^= t + kGolden + (h << 6) + (h >> 2);
      Rng mix(h);
      h = mix.next_u64();
    }
    return h;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace famnet
