#pragma once

#include <cstddef>
#include <cstdint>

#include "unicron/rng.hpp"

// Integer kernels for the synthetic gradient engine. Each micro-batch
// gradient component is a pure function of a 64-bit base (derived from
// seed/iteration/micro-batch) and the component index, so accumulation is
// order-independent and exactly reproducible. The scalar kernels are the
// reference; the AVX2 variants are selected at runtime and are bitwise
// equivalent (enforced by tests).

namespace unicron::kernels {

// component value in [-2^30, 2^30), so int64 accumulators cannot overflow
// for any realistic micro-batch count
constexpr std::int64_t grad_component(std::uint64_t base, std::size_t d) noexcept {
  std::uint64_t z = mix64(base + (static_cast<std::uint64_t>(d) + 1) * kGolden);
  return static_cast<std::int64_t>(z >> 33) - (std::int64_t{1} << 30);
}

enum class Backend { scalar, avx2 };

// backend chosen once at startup from cpu capabilities
Backend active_backend() noexcept;
const char* backend_name(Backend b) noexcept;
// test hook; returns false if the requested backend is unavailable
bool force_backend(Backend b) noexcept;

// acc[d] += grad_component(base, d) for d in [0, dims)
void grad_accumulate(std::uint64_t base, std::int64_t* acc, std::size_t dims);
// acc[i] += src[i]
void vec_add(std::int64_t* acc, const std::int64_t* src, std::size_t n);

namespace scalar {
void grad_accumulate(std::uint64_t base, std::int64_t* acc, std::size_t dims);
void vec_add(std::int64_t* acc, const std::int64_t* src, std::size_t n);
}  // namespace scalar

}  // namespace unicron::kernels
