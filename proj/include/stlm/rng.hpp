#pragma once

#include <cstdint>
#include <cmath>
#include <string>
#include <string_view>

namespace stlm {

// splitmix64 step; used both as an engine seeder and as a seed-splitting hash
// so that per-sample / per-parameter streams are independent of iteration order.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

inline uint64_t hash_str(std::string_view s) {
  // FNV-1a 64
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic RNG with hand-rolled distributions. std::*_distribution is
// implementation-defined, which would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {
    // warm up; splitmix has no bad seeds but keep streams decorrelated
    next();
  }

  static Rng for_index(uint64_t seed, uint64_t index) { return Rng(hash_combine(seed, index)); }
  static Rng for_name(uint64_t seed, std::string_view name) {
    return Rng(hash_combine(seed, hash_str(name)));
  }

  uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  // uniform in [0,1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + int64_t(next() % uint64_t(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one value per call, cache the pair
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stlm
