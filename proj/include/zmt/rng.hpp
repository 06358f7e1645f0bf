#pragma once

#include <cstdint>

namespace zmt {

/// Counter-based generator (splitmix64 finalizer applied to key+counter).
/// Splitting derives an independent stream from a 64-bit stream id, so
/// fixtures are reproducible from a single recorded seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed) {}

  Rng split(std::uint64_t stream) const {
    return Rng(mix(key_ ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL)));
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t seed() const { return key_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

} // namespace zmt
