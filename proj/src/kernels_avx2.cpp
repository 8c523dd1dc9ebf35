// AVX2 variants of the gradient kernels. AVX2 has no 64x64->64 multiply, so
// the splitmix64 finalizer's multiplies are assembled from 32x32->64 partial
// products; the result is bit-identical to the scalar path.

#include <immintrin.h>

#include "unicron/kernels.hpp"

namespace unicron::kernels::avx2 {
namespace {

inline __m256i mullo64(__m256i a, __m256i b) {
  __m256i lo = _mm256_mul_epu32(a, b);
  __m256i cross = _mm256_add_epi64(_mm256_mul_epu32(_mm256_srli_epi64(a, 32), b),
                                   _mm256_mul_epu32(a, _mm256_srli_epi64(b, 32)));
  return _mm256_add_epi64(lo, _mm256_slli_epi64(cross, 32));
}

inline __m256i mix64x4(__m256i z) {
  const __m256i c1 = _mm256_set1_epi64x(static_cast<long long>(0xBF58476D1CE4E5B9ULL));
  const __m256i c2 = _mm256_set1_epi64x(static_cast<long long>(0x94D049BB133111EBULL));
  z = _mm256_xor_si256(z, _mm256_srli_epi64(z, 30));
  z = mullo64(z, c1);
  z = _mm256_xor_si256(z, _mm256_srli_epi64(z, 27));
  z = mullo64(z, c2);
  z = _mm256_xor_si256(z, _mm256_srli_epi64(z, 31));
  return z;
}

}  // namespace

void grad_accumulate(std::uint64_t base, std::int64_t* acc, std::size_t dims) {
  const std::size_t main = dims & ~std::size_t{3};
  const __m256i step = _mm256_set1_epi64x(static_cast<long long>(4 * kGolden));
  const __m256i bias = _mm256_set1_epi64x(std::int64_t{1} << 30);
  // lane d holds base + (d+1)*kGolden, the splitmix-style stream position
  __m256i pos = _mm256_add_epi64(
      _mm256_set1_epi64x(static_cast<long long>(base)),
      _mm256_setr_epi64x(static_cast<long long>(1 * kGolden), static_cast<long long>(2 * kGolden),
                         static_cast<long long>(3 * kGolden), static_cast<long long>(4 * kGolden)));
  for (std::size_t d = 0; d < main; d += 4) {
    __m256i z = mix64x4(pos);
    __m256i comp = _mm256_sub_epi64(_mm256_srli_epi64(z, 33), bias);
    __m256i cur = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(acc + d));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(acc + d), _mm256_add_epi64(cur, comp));
    pos = _mm256_add_epi64(pos, step);
  }
  for (std::size_t d = main; d < dims; ++d) acc[d] += grad_component(base, d);
}

void vec_add(std::int64_t* acc, const std::int64_t* src, std::size_t n) {
  const std::size_t main = n & ~std::size_t{3};
  for (std::size_t i = 0; i < main; i += 4) {
    __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(acc + i));
    __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(acc + i), _mm256_add_epi64(a, b));
  }
  for (std::size_t i = main; i < n; ++i) acc[i] += src[i];
}

}  // namespace unicron::kernels::avx2
