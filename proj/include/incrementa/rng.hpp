#pragma once

#include <cmath>
#include <cstdint>

namespace incrementa {

/// Identifies one reproducible random stream. The same (master_seed,
/// stream_index) pair always yields the same draw sequence; distinct
/// stream indices behave as independent streams.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;

  SeedSpec derive(std::uint64_t sub_stream) const {
    // Stable sub-stream derivation for nested consumers (folds, replicates).
    return SeedSpec{master_seed, stream_index * 0x100000001b3ULL + sub_stream + 1};
  }
};

/// Counter-based generator: output i is mix64(key + i*PHI), so draws are a
/// pure function of (seed, counter) and streams never share state.
///
/// The mixer is the splitmix64 finalizer; the key folds master_seed and
/// stream_index through two mixing rounds.
class CounterRng {
 public:
  explicit CounterRng(SeedSpec seed)
      : key_(mix64(mix64(seed.master_seed ^ 0x9e3779b97f4a7c15ULL) ^
                   (seed.stream_index + 0x2545f4914f6cdd1dULL))) {}

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per call
  /// so the draw sequence is position-independent.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // Guard the log singularity at u1 == 0.
    u1 = u1 > 0x1.0p-53 ? u1 : 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). n must be positive. Uses modulo reduction;
  /// the bias is negligible for the n used here (n << 2^64).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline double expit(double t) {
  // Branch keeps exp() argument nonpositive for stability at |t| large.
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace incrementa
