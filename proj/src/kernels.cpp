#include "unicron/kernels.hpp"

namespace unicron::kernels {

#if defined(UNICRON_HAVE_AVX2_TU)
namespace avx2 {
void grad_accumulate(std::uint64_t base, std::int64_t* acc, std::size_t dims);
void vec_add(std::int64_t* acc, const std::int64_t* src, std::size_t n);
}  // namespace avx2
#endif

namespace {

bool avx2_available() noexcept {
#if defined(UNICRON_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend& backend_slot() noexcept {
  static Backend b = avx2_available() ? Backend::avx2 : Backend::scalar;
  return b;
}

}  // namespace

Backend active_backend() noexcept { return backend_slot(); }

const char* backend_name(Backend b) noexcept {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

bool force_backend(Backend b) noexcept {
  if (b == Backend::avx2 && !avx2_available()) return false;
  backend_slot() = b;
  return true;
}

void grad_accumulate(std::uint64_t base, std::int64_t* acc, std::size_t dims) {
#if defined(UNICRON_HAVE_AVX2_TU)
  if (backend_slot() == Backend::avx2) {
    avx2::grad_accumulate(base, acc, dims);
    return;
  }
#endif
  scalar::grad_accumulate(base, acc, dims);
}

void vec_add(std::int64_t* acc, const std::int64_t* src, std::size_t n) {
#if defined(UNICRON_HAVE_AVX2_TU)
  if (backend_slot() == Backend::avx2) {
    avx2::vec_add(acc, src, n);
    return;
  }
#endif
  scalar::vec_add(acc, src, n);
}

}  // namespace unicron::kernels
