#pragma once

#include <cstdint>

namespace psgd {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014 constants). A bijection on
/// 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th output is mix64(key + i * 0x9E3779B97F4A7C15).
/// Streams are fully determined by the key, so a trajectory seeded with the
/// same key reproduces on any platform. Normals use Box-Muller; the transform
/// is part of the stream definition.
class CounterRng {
 public:
  static constexpr const char* kName = "splitmix64-counter";
  static constexpr int kVersion = 1;

  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by rejection (exactly uniform).
  std::uint64_t uniform_index(std::uint64_t n);

  double normal();

  std::uint64_t counter() const { return counter_; }
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace psgd
