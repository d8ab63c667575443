#include <doctest.h>

#include <array>
#include <vector>

#include "support.hpp"
#include "vfl/kernels/kernels.hpp"

using namespace vfl;
using kernels::Backend;

namespace {

std::vector<float> randv(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = float(rng.normal());
  return v;
}

float max_rel(const std::vector<float>& a, const std::vector<float>& b) {
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]) / std::max(1.0f, std::fabs(a[i])));
  return worst;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
  if (!kernels::supported(Backend::kAvx2)) {
    MESSAGE("avx2 unavailable on this host; only the scalar table is exercised");
    return;
  }
  const auto& s = kernels::table(Backend::kScalar);
  const auto& v = kernels::table(Backend::kAvx2);

  SUBCASE("gemm over awkward shapes and strides") {
    for (auto [m, n, k] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 130, 257}}) {
      const std::size_t lda = k + 3, ldb = n + 1, ldc = n + 2;
      auto a = randv(m * lda, 1), b = randv(k * ldb, 2);
      for (bool acc : {false, true}) {
        auto c1 = randv(m * ldc, 3), c2 = c1;
        s.gemm(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc, acc);
        v.gemm(m, n, k, a.data(), lda, b.data(), ldb, c2.data(), ldc, acc);
        CHECK(max_rel(c1, c2) < 1e-5f);
      }
    }
  }
  SUBCASE("vector kernels") {
    for (std::size_t n : {1u, 7u, 8u, 31u, 1000u}) {
      auto x = randv(n, 4), y1 = randv(n, 5), y2 = y1;
      s.axpy(n, 0.3f, x.data(), y1.data());
      v.axpy(n, 0.3f, x.data(), y2.data());
      CHECK(max_rel(y1, y2) < 1e-6f);
      CHECK(std::fabs(s.dot(n, x.data(), y1.data()) - v.dot(n, x.data(), y1.data())) <
            1e-4f * std::max(1.0f, std::fabs(s.dot(n, x.data(), y1.data()))));
      std::vector<float> r1(n), r2(n), d1(n), d2(n);
      s.relu_forward(n, x.data(), r1.data());
      v.relu_forward(n, x.data(), r2.data());
      CHECK(r1 == r2);
      s.relu_backward(n, x.data(), y1.data(), d1.data());
      v.relu_backward(n, x.data(), y1.data(), d2.data());
      CHECK(d1 == d2);
      auto g = randv(n, 6), vel1 = randv(n, 7), vel2 = vel1, w1 = randv(n, 8), w2 = w1;
      s.sgd_momentum_step(n, 0.01f, 0.9f, 5e-4f, g.data(), vel1.data(), w1.data());
      v.sgd_momentum_step(n, 0.01f, 0.9f, 5e-4f, g.data(), vel2.data(), w2.data());
      CHECK(max_rel(w1, w2) < 1e-6f);
      CHECK(max_rel(vel1, vel2) < 1e-6f);
    }
  }
  SUBCASE("row bias and column sums") {
    const std::size_t rows = 13, cols = 21;
    auto bias = randv(cols, 9), m1 = randv(rows * cols, 10), m2 = m1;
    s.add_row_bias(rows, cols, bias.data(), m1.data());
    v.add_row_bias(rows, cols, bias.data(), m2.data());
    CHECK(m1 == m2);
    std::vector<float> o1(cols, 1.0f), o2(cols, 1.0f);
    s.column_sums(rows, cols, m1.data(), o1.data());
    v.column_sums(rows, cols, m1.data(), o2.data());
    CHECK(max_rel(o1, o2) < 1e-5f);
  }
}

TEST_CASE("scalar gemm matches a triple loop") {
  const std::size_t m = 4, n = 3, k = 5;
  auto a = randv(m * k, 11), b = randv(k * n, 12);
  std::vector<float> c(m * n);
  kernels::table(Backend::kScalar).gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0;
      for (std::size_t p = 0; p < k; ++p) ref += double(a[i * k + p]) * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(ref).epsilon(1e-6));
    }
}

TEST_CASE("backend names") {
  CHECK(kernels::backend_name(Backend::kScalar) == "scalar");
  CHECK(kernels::supported(Backend::kScalar));
}
