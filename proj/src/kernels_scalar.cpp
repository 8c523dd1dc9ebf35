#include "unicron/kernels.hpp"

namespace unicron::kernels::scalar {

void grad_accumulate(std::uint64_t base, std::int64_t* acc, std::size_t dims) {
  for (std::size_t d = 0; d < dims; ++d) acc[d] += grad_component(base, d);
}

void vec_add(std::int64_t* acc, const std::int64_t* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += src[i];
}

}  // namespace unicron::kernels::scalar
