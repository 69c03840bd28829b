#pragma once

#include <cmath>
#include <cstdint>

namespace eotsieve {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from (master, index, tag). Replications
/// and sub-streams are keyed this way so execution order never matters.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t tag = 0) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= index * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL;
  std::uint64_t b = splitmix64(s);
  s ^= tag * 0x9E3779B97F4A7C15ULL + 1;
  std::uint64_t c = splitmix64(s);
  return a ^ (b + 0x9E3779B97F4A7C15ULL + (c << 6) + (c >> 2));
}

/// xoshiro256++ generator. Self-contained so that streams are bit-identical
/// across platforms and standard-library versions (std::*_distribution is
/// implementation-defined and would break byte-identical replication).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
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

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Index in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is small relative to 2^64.
    return next_u64() % n;
  }

  /// Standard normal via polar Box-Muller (cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double exponential() {
    double u;
    do {
      u = uniform01();
    } while (u == 0.0);
    return -std::log(u);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace eotsieve
