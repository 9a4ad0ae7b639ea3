#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gradvar {

/// Counter-based deterministic generator. Draw n is a pure function of
/// (seed, n), so streams are reproducible across platforms and insensitive
/// to how callers interleave draws from independently derived streams.
/// std::mt19937 + std::normal_distribution are not bit-portable across
/// standard library implementations, which rules them out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// SplitMix64 output for the next counter value.
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1): top 53 bits scaled by 2^-53.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. One fresh pair of uniforms per call;
  /// the second Box-Muller branch is deliberately discarded so a draw's
  /// value never depends on call parity.
  double gaussian() {
    // 1 - u is in (0, 1], so the log argument never hits zero.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

/// Stable substream derivation: hash the parent seed with a stream tag.
/// Used to give each ensemble member, each weight layer, and each data
/// split its own independent stream from one user-facing seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0x6A09E667F3BCC909ull + stream * 0x0F1BBCDCBFA53E0Bull));
  return r.next_u64();
}

} // namespace gradvar
