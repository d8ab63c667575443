#pragma once

// Dense float kernels used by every layer in the library.
//
// Each kernel has a scalar reference implementation and an AVX2+FMA variant.
// The active table is chosen once per process from the host CPU, and can be
// pinned with VFL_LAB_KERNELS=scalar|avx2 or set_backend(). All matrices are
// row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

namespace vfl::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;

  // C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n]
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const float* a,
               std::size_t lda, const float* b, std::size_t ldb, float* c,
               std::size_t ldc, bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y);

  float (*dot)(std::size_t n, const float* x, const float* y);

  // y = max(x, 0)
  void (*relu_forward)(std::size_t n, const float* x, float* y);
  // dx = x > 0 ? dy : 0
  void (*relu_backward)(std::size_t n, const float* x, const float* dy,
                        float* dx);

  // rows[r][j] += bias[j] for r < n_rows
  void (*add_row_bias)(std::size_t n_rows, std::size_t n_cols,
                       const float* bias, float* rows);
  // out[j] += sum_r rows[r][j]
  void (*column_sums)(std::size_t n_rows, std::size_t n_cols,
                      const float* rows, float* out);

  // v = momentum * v + (g + weight_decay * w); w -= lr * v
  void (*sgd_momentum_step)(std::size_t n, float lr, float momentum,
                            float weight_decay, const float* g, float* v,
                            float* w);
};

const KernelTable& active();
const KernelTable& table(Backend backend);

// True when the CPU can execute the given backend.
bool supported(Backend backend);

// Pins the process-wide backend. Throws std::invalid_argument when the CPU
// does not support it.
void set_backend(Backend backend);

std::string_view backend_name(Backend backend);

namespace scalar {
extern const KernelTable kTable;
}
namespace avx2 {
// Only defined when the build targets x86-64.
extern const KernelTable kTable;
}

}  // namespace vfl::kernels
