#include "vfl/kernels/kernels.hpp"

namespace vfl::kernels::scalar {
namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float* c,
          std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    const float* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

float dot(std::size_t n, const float* x, const float* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += double(x[i]) * double(y[i]);
  return static_cast<float>(acc);
}

void relu_forward(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* dy, float* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void add_row_bias(std::size_t n_rows, std::size_t n_cols, const float* bias,
                  float* rows) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    float* row = rows + r * n_cols;
    for (std::size_t j = 0; j < n_cols; ++j) row[j] += bias[j];
  }
}

void column_sums(std::size_t n_rows, std::size_t n_cols, const float* rows,
                 float* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    const float* row = rows + r * n_cols;
    for (std::size_t j = 0; j < n_cols; ++j) out[j] += row[j];
  }
}

void sgd_momentum_step(std::size_t n, float lr, float momentum,
                       float weight_decay, const float* g, float* v,
                       float* w) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
    w[i] -= lr * v[i];
  }
}

}  // namespace

const KernelTable kTable{
    Backend::kScalar, gemm,         axpy,        dot,
    relu_forward,     relu_backward, add_row_bias, column_sums,
    sgd_momentum_step,
};

}  // namespace vfl::kernels::scalar
