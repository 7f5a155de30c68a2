#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ewmark {

// 64-bit FNV-1a. Stable across platforms; used wherever a token or a
// composite key has to map to a reproducible seed.
inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = 1469598103934665603ull) {
  constexpr std::uint64_t kPrime = 1099511628211ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= kPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::uint64_t value, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= static_cast<unsigned char>(value & 0xFF);
    h *= 1099511628211ull;
    value >>= 8;
  }
  return h;
}

// splitmix64 finalizer; decorrelates composite seeds before they feed an
// engine (raw FNV outputs of similar keys are too close together).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random stream. std::mt19937_64 is the engine, but the
// uniform/normal transforms are fixed here instead of going through
// std::uniform_real_distribution and friends, whose output is
// implementation-defined. Results are therefore identical across
// standard libraries for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound) by rejection (no modulo bias).
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; caches the second draw.
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
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace ewmark
