#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace deconf {

/// Stream tags keep generators for different roles independent under one run seed.
enum class StreamTag : std::uint64_t {
  kEnvironment = 1,
  kAgent = 2,
  kInit = 3,
  kExploration = 4,
  kExpertBatch = 5,
  kBcLatent = 6,
  kSynthetic = 7,
  kDataset = 8,
};

/// Mixes a 64-bit value (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Seeded generator. `stream()` derives independent generators from (seed, tag, index),
/// so episode i of a run draws the same numbers regardless of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng stream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0);
  static std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform on [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int uniform_int(int n);

  /// Inverse-CDF draw from an (approximately) normalized probability vector.
  template <typename Derived>
  int categorical(const Eigen::DenseBase<Derived>& probs) {
    const double u = uniform();
    double cumulative = 0.0;
    int last_positive = -1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      const double p = probs.derived().coeff(i);
      if (p <= 0.0) continue;
      last_positive = static_cast<int>(i);
      cumulative += p;
      if (u < cumulative) return last_positive;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace deconf
