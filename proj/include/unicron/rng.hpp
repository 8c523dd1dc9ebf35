#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

namespace unicron {

// 64-bit avalanche mix (splitmix64 finalizer). This is the one mixing
// primitive behind every random stream and the synthetic gradients, so
// results are identical across platforms and reruns.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// FNV-1a, used for stream ids and file content digests.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Counter-based generator: state is (key, counter), every draw is a pure
// function of both. Independent streams come from (seed, stream-id) pairs,
// so trace generation per node and per purpose never interleaves.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(mix64(seed + kGolden) ^ mix64(stream * kGolden + 1))) {}

  CounterRng substream(std::string_view name) const noexcept {
    return CounterRng(key_, fnv1a(name));
  }

  CounterRng substream(std::uint64_t id) const noexcept { return CounterRng(key_, id); }

  std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  // [0, 1), 53 bits of resolution.
  double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

  double exponential(double mean) noexcept {
    return -mean * std::log1p(-next_unit());
  }

  // index into a discrete distribution; weights need not be normalized
  std::size_t pick_weighted(std::span<const double> weights) noexcept {
    double total = 0;
    for (double w : weights) total += w;
    double u = next_unit() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  std::uint64_t next_below(std::uint64_t n) noexcept {
    return n == 0 ? 0 : next_u64() % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace unicron
