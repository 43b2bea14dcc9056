#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hatr {

/**
 * Deterministic random source.
 *
 * Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
 * provides hand-rolled variate transforms, so every draw is reproducible from
 * the seed alone, independent of the standard library's distribution
 * implementations. Named streams derived from (seed, stream_id) are used for
 * order-independent parallel collection.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /** Derives an independent generator for the given (seed, stream) pair. */
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64() { return engine_(); }

  /** Uniform double in [0, 1). */
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /** Uniform integer in [lo, hi], inclusive. */
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /** Standard normal via Box-Muller. */
  double normal();

  /** Samples an index from an explicit probability vector (CDF walk). */
  int categorical(std::span<const double> probs);

  /** In-place Fisher-Yates shuffle. */
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      std::swap(items[i], items[uniform_int(0, i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/** SplitMix64 finalizer; used to decorrelate derived seeds. */
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace hatr
