#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace wavediff {

// ============================================================================
// Deterministic seeded RNG with named sub-streams.
//
// One master seed drives the whole pipeline; independent stages (data
// generation, parameter init, training batches, sampling noise) derive their
// own streams by name so that adding draws to one stage never shifts another.
// ============================================================================

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Stable named seed derivation, for per-item seeds that get recorded in
/// manifests and must allow regenerating one item in isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                 std::uint64_t index = 0) {
  return detail::splitmix64(detail::splitmix64(master ^ detail::fnv1a64(name)) + index);
}

/// xoshiro256++ generator seeded via splitmix64. Self-contained so that
/// streams are bit-reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) word = detail::splitmix64(x++);
    has_spare_ = false;
  }

  /// Derive an independent stream keyed by name (and optional index).
  [[nodiscard]] Rng stream(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t h = detail::fnv1a64(name);
    std::uint64_t base = s_[0] ^ (s_[1] + 0x9e3779b97f4a7c15ULL * (index + 1));
    return Rng(detail::splitmix64(base ^ h));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo bias is negligible for n << 2^64 but avoid it anyway.
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller (deterministic, libc-independent).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0x1.0p-60) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_;
};

}  // namespace wavediff
