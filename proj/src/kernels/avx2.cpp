#include "vfl/kernels/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>

#define VFL_AVX2 __attribute__((target("avx2,fma")))

namespace vfl::kernels::avx2 {
namespace {

constexpr std::size_t kBlockK = 256;

// Register-blocked micro kernel: MR rows of C times NV*8 columns.
template <int MR, int NV>
VFL_AVX2 inline void micro_kernel(std::size_t kc, const float* a,
                                  std::size_t lda, const float* b,
                                  std::size_t ldb, float* c, std::size_t ldc) {
  __m256 acc[MR][NV];
#pragma GCC unroll 8
  for (int r = 0; r < MR; ++r)
#pragma GCC unroll 2
    for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_loadu_ps(c + r * ldc + v * 8);

  for (std::size_t p = 0; p < kc; ++p) {
    __m256 bv[NV];
#pragma GCC unroll 2
    for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_ps(b + p * ldb + v * 8);
#pragma GCC unroll 8
    for (int r = 0; r < MR; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
#pragma GCC unroll 2
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_ps(av, bv[v], acc[r][v]);
    }
  }

#pragma GCC unroll 8
  for (int r = 0; r < MR; ++r)
#pragma GCC unroll 2
    for (int v = 0; v < NV; ++v) _mm256_storeu_ps(c + r * ldc + v * 8, acc[r][v]);
}

template <int NV>
VFL_AVX2 inline void row_block(std::size_t rows, std::size_t kc,
                               const float* a, std::size_t lda, const float* b,
                               std::size_t ldb, float* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 6 <= rows; i += 6)
    micro_kernel<6, NV>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
  switch (rows - i) {
    case 5: micro_kernel<5, NV>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
    case 4: micro_kernel<4, NV>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
    case 3: micro_kernel<3, NV>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
    case 2: micro_kernel<2, NV>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
    case 1: micro_kernel<1, NV>(kc, a + i * lda, lda, b, ldb, c + i * ldc, ldc); break;
    default: break;
  }
}

VFL_AVX2 void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
                   std::size_t lda, const float* b, std::size_t ldb, float* c,
                   std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0f);
  }
  // B panels are packed contiguously so the micro kernel streams them.
  alignas(32) float packed[kBlockK * 16];
  for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
    const std::size_t kc = std::min(kBlockK, k - p0);
    const float* ap = a + p0;
    const float* bp = b + p0 * ldb;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      for (std::size_t p = 0; p < kc; ++p) {
        _mm256_store_ps(packed + p * 16, _mm256_loadu_ps(bp + p * ldb + j));
        _mm256_store_ps(packed + p * 16 + 8, _mm256_loadu_ps(bp + p * ldb + j + 8));
      }
      row_block<2>(m, kc, ap, lda, packed, 16, c + j, ldc);
    }
    for (; j + 8 <= n; j += 8) {
      for (std::size_t p = 0; p < kc; ++p)
        _mm256_store_ps(packed + p * 8, _mm256_loadu_ps(bp + p * ldb + j));
      row_block<1>(m, kc, ap, lda, packed, 8, c + j, ldc);
    }
    if (j < n) {
      for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        const float* arow = ap + i * lda;
        for (std::size_t p = 0; p < kc; ++p) {
          const float av = arow[p];
          const float* brow = bp + p * ldb;
          for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
        }
      }
    }
  }
}

VFL_AVX2 void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

VFL_AVX2 float dot(std::size_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  acc0 = _mm256_add_ps(acc0, acc1);
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, acc0);
  float total = 0.0f;
  for (float lane : lanes) total += lane;
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

VFL_AVX2 void relu_forward(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

VFL_AVX2 void relu_backward(std::size_t n, const float* x, const float* dy,
                            float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

VFL_AVX2 void add_row_bias(std::size_t n_rows, std::size_t n_cols,
                           const float* bias, float* rows) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    float* row = rows + r * n_cols;
    std::size_t j = 0;
    for (; j + 8 <= n_cols; j += 8)
      _mm256_storeu_ps(row + j, _mm256_add_ps(_mm256_loadu_ps(row + j), _mm256_loadu_ps(bias + j)));
    for (; j < n_cols; ++j) row[j] += bias[j];
  }
}

VFL_AVX2 void column_sums(std::size_t n_rows, std::size_t n_cols,
                          const float* rows, float* out) {
  std::size_t j = 0;
  for (; j + 8 <= n_cols; j += 8) {
    __m256 acc = _mm256_loadu_ps(out + j);
    for (std::size_t r = 0; r < n_rows; ++r)
      acc = _mm256_add_ps(acc, _mm256_loadu_ps(rows + r * n_cols + j));
    _mm256_storeu_ps(out + j, acc);
  }
  for (; j < n_cols; ++j) {
    float acc = out[j];
    for (std::size_t r = 0; r < n_rows; ++r) acc += rows[r * n_cols + j];
    out[j] = acc;
  }
}

VFL_AVX2 void sgd_momentum_step(std::size_t n, float lr, float momentum,
                                float weight_decay, const float* g, float* v,
                                float* w) {
  const __m256 mu = _mm256_set1_ps(momentum);
  const __m256 wd = _mm256_set1_ps(weight_decay);
  const __m256 neg_lr = _mm256_set1_ps(-lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 wv = _mm256_loadu_ps(w + i);
    const __m256 step = _mm256_fmadd_ps(wd, wv, _mm256_loadu_ps(g + i));
    const __m256 vel = _mm256_fmadd_ps(mu, _mm256_loadu_ps(v + i), step);
    _mm256_storeu_ps(v + i, vel);
    _mm256_storeu_ps(w + i, _mm256_fmadd_ps(neg_lr, vel, wv));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
    w[i] -= lr * v[i];
  }
}

}  // namespace

const KernelTable kTable{
    Backend::kAvx2,   gemm,          axpy,         dot,
    relu_forward,     relu_backward, add_row_bias, column_sums,
    sgd_momentum_step,
};

}  // namespace vfl::kernels::avx2

#endif
