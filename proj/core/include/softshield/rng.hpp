#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace softshield {

// splitmix64 finalizer; also used for feature hashing and name hashing.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic splitmix64 stream: the same seed yields the same sequence
// within one build on one platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double next_uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller over exactly two uniform draws.
  float gaussian() {
    double u1 = 1.0 - next_uniform();  // (0, 1], keeps the log finite
    double u2 = next_uniform();
    return float(std::sqrt(-2.0 * std::log(u1)) *
                 std::cos(2.0 * std::numbers::pi * u2));
  }

  // Uniform integer in [0, n); n must be positive.
  int next_below(int n) { return int(next_u64() % uint64_t(n)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[size_t(next_below(int(i)))]);
    }
  }

  // Derives a substream seed, e.g. from (run seed, tensor name hash).
  static uint64_t derive(uint64_t seed, std::string_view name) {
    return mix64(seed ^ (fnv1a64(name) + 0x9e3779b97f4a7c15ull));
  }

 private:
  uint64_t state_;
};

}  // namespace softshield
