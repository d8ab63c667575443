#include "vfl/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "vfl/core/error.hpp"

namespace vfl::nn {

Tensor log_softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  const std::size_t n = logits.rows(), c = logits.row_size();
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = logits.data() + r * c;
    const float peak = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(double(z[j]) - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = float(double(z[j]) - log_norm);
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = log_softmax_rows(logits);
  for (float& v : out.values()) v = std::exp(v);
  return out;
}

LossValue cross_entropy(const Tensor& logits, std::span<const Label> labels,
                        std::span<const float> weights, double normalizer) {
  const std::size_t n = logits.rows(), c = logits.row_size();
  if (labels.size() != n) throw ConfigError("cross_entropy: label count mismatch");
  if (!weights.empty() && weights.size() != n) throw ConfigError("cross_entropy: weight count mismatch");
  if (normalizer <= 0.0) normalizer = double(n);
  LossValue result;
  result.grad = Tensor(logits.shape());
  if (n == 0) return result;
  const Tensor log_p = log_softmax_rows(logits);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const Label y = labels[r];
    if (y < 0 || std::size_t(y) >= c) throw ConfigError("cross_entropy: label out of range");
    const double w = weights.empty() ? 1.0 : double(weights[r]);
    if (w == 0.0) continue;
    total += -w * log_p[r * c + std::size_t(y)];
    const double scale = w / normalizer;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(double(log_p[r * c + j]));
      result.grad[r * c + j] = float(scale * (p - (std::size_t(y) == j ? 1.0 : 0.0)));
    }
  }
  result.value = total / normalizer;
  return result;
}

std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const Label> labels) {
  const std::size_t n = logits.rows(), c = logits.row_size();
  if (labels.size() != n) throw ConfigError("cross_entropy_rows: label count mismatch");
  const Tensor log_p = log_softmax_rows(logits);
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = -double(log_p[r * c + std::size_t(labels[r])]);
  return out;
}

LossValue mean_squared_error(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) throw ConfigError("mean_squared_error: size mismatch");
  LossValue result;
  result.grad = Tensor(prediction.shape());
  const double n = double(prediction.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = double(prediction[i]) - double(target[i]);
    total += d * d;
    result.grad[i] = float(2.0 * d / n);
  }
  result.value = total / n;
  return result;
}

double log_sigmoid(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

std::vector<Label> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.row_size();
  std::vector<Label> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = logits.data() + r * c;
    out[r] = Label(std::max_element(z, z + c) - z);
  }
  return out;
}

}  // namespace vfl::nn
