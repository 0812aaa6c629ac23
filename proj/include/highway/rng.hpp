#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace highway {

/// Counter-based pseudorandom generator (SplitMix64 finalizer over a keyed
/// counter). Draw i of stream `key` is mix(key + i * golden), so a stream is
/// fully determined by its 64-bit key and the number of draws made; streams
/// for independent work items are derived from labels instead of by sharing
/// sequence state, which keeps parallel runs reproducible.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64() {
    counter_ += 1;
    return mix(key_ + kGolden * counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % un;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<int>(x % un);
  }

  /// Standard normal via Box-Muller; draws exactly two uniforms.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  bool coin() { return (next_u64() & 1u) != 0; }

  /// Derived stream for a labelled sub-task. Children of distinct labels are
  /// decorrelated from each other and from the parent.
  CounterRng child(std::string_view label) const {
    return CounterRng(mix(key_ ^ fnv1a64(label)));
  }

  CounterRng child(std::uint64_t salt) const {
    return CounterRng(mix(key_ ^ (salt + kGolden)));
  }

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  static constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : s) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001B3ull;
    }
    return h;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.14159265358979323846;

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace highway
