#include "vfl/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "vfl/core/error.hpp"

namespace vfl {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_))
    throw ConfigError("tensor value count " + std::to_string(values_.size()) +
                      " does not match shape " + shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != values_.size())
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " +
                      shape_string(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(float value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices) {
  Shape shape = source.shape();
  shape.at(0) = indices.size();
  Tensor out(shape);
  const std::size_t width = source.row_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = source.row(indices[i]);
    std::copy(src.begin(), src.end(), out.data() + i * width);
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor* const> parts) {
  if (parts.empty()) return {};
  Shape shape = parts.front()->shape();
  std::size_t total = 0;
  for (const Tensor* part : parts) {
    Shape tail(part->shape().begin() + 1, part->shape().end());
    Shape head_tail(shape.begin() + 1, shape.end());
    if (tail != head_tail) throw ConfigError("concat_rows: trailing shape mismatch");
    total += part->rows();
  }
  shape[0] = total;
  Tensor out(shape);
  float* dst = out.data();
  for (const Tensor* part : parts) dst = std::copy(part->data(), part->data() + part->size(), dst);
  return out;
}

Tensor concat_columns(std::span<const Tensor* const> parts) {
  if (parts.empty()) return {};
  const std::size_t n = parts.front()->rows();
  std::size_t width = 0;
  for (const Tensor* part : parts) {
    if (part->rows() != n) throw ConfigError("concat_columns: row count mismatch");
    width += part->row_size();
  }
  Tensor out({n, width});
  for (std::size_t r = 0; r < n; ++r) {
    float* dst = out.data() + r * width;
    for (const Tensor* part : parts) {
      auto src = part->row(r);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Tensor slice_columns(const Tensor& source, std::size_t begin, std::size_t width) {
  const std::size_t n = source.rows();
  const std::size_t stride = source.row_size();
  if (begin + width > stride) throw ConfigError("slice_columns: range out of bounds");
  Tensor out({n, width});
  for (std::size_t r = 0; r < n; ++r) {
    const float* src = source.data() + r * stride + begin;
    std::copy(src, src + width, out.data() + r * width);
  }
  return out;
}

void transpose(std::size_t rows, std::size_t cols, const float* src, float* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ConfigError("max_abs_difference: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  return worst;
}

}  // namespace vfl
