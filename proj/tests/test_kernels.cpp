#include <vector>

#include "doctest.h"
#include "unicron/kernels.hpp"
#include "unicron/rng.hpp"

using namespace unicron;

TEST_CASE("grad_component is pure and bounded") {
  CounterRng rng(7, 1);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t base = rng.next_u64();
    const std::size_t d = rng.next_below(256);
    const auto a = kernels::grad_component(base, d);
    const auto b = kernels::grad_component(base, d);
    CHECK(a == b);
    CHECK(a >= -(std::int64_t{1} << 30));
    CHECK(a < (std::int64_t{1} << 30));
  }
}

TEST_CASE("scalar and dispatched kernels agree bitwise") {
  const auto initial = kernels::active_backend();
  CounterRng rng(99, 2);

  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t base = rng.next_u64();
    const std::size_t dims = 1 + rng.next_below(130);  // covers tails past the vector width

    std::vector<std::int64_t> ref(dims), out(dims);
    for (std::size_t i = 0; i < dims; ++i) ref[i] = out[i] = static_cast<std::int64_t>(i) - 7;

    kernels::scalar::grad_accumulate(base, ref.data(), dims);

    if (kernels::force_backend(kernels::Backend::avx2)) {
      kernels::grad_accumulate(base, out.data(), dims);
      CHECK(ref == out);
    }
    kernels::force_backend(kernels::Backend::scalar);
    std::vector<std::int64_t> out2(dims);
    for (std::size_t i = 0; i < dims; ++i) out2[i] = static_cast<std::int64_t>(i) - 7;
    kernels::grad_accumulate(base, out2.data(), dims);
    CHECK(ref == out2);
  }

  SUBCASE("vec_add agrees") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng.next_below(67);
      std::vector<std::int64_t> acc(n), src(n);
      for (std::size_t i = 0; i < n; ++i) {
        acc[i] = static_cast<std::int64_t>(rng.next_u64() >> 33);
        src[i] = static_cast<std::int64_t>(rng.next_u64() >> 33) - (1 << 30);
      }
      auto ref = acc;
      kernels::scalar::vec_add(ref.data(), src.data(), n);
      if (kernels::force_backend(kernels::Backend::avx2)) {
        auto out = acc;
        kernels::vec_add(out.data(), src.data(), n);
        CHECK(ref == out);
      }
    }
  }

  kernels::force_backend(initial);
}

TEST_CASE("counter rng streams are independent and deterministic") {
  CounterRng a(42, 0), b(42, 0), c(42, 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  SUBCASE("unit interval") {
    CounterRng r(5, 5);
    for (int i = 0; i < 1000; ++i) {
      const double u = r.next_unit();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }
  SUBCASE("exponential mean") {
    CounterRng r(11, 3);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += r.exponential(10.0);
    CHECK(sum / n == doctest::Approx(10.0).epsilon(0.05));
  }
}
