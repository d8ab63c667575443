#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vfl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float tensor with value semantics. The first axis is the
// batch axis for every activation tensor in the library.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Batch rows: first-axis length and elements per row.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_size() const { return rows() == 0 ? 0 : size() / rows(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  std::vector<float>& storage() { return values_; }
  const std::vector<float>& storage() const { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }
  float& at(std::size_t r, std::size_t c) { return values_[r * row_size() + c]; }
  float at(std::size_t r, std::size_t c) const { return values_[r * row_size() + c]; }

  std::span<float> row(std::size_t r) { return {values_.data() + r * row_size(), row_size()}; }
  std::span<const float> row(std::size_t r) const {
    return {values_.data() + r * row_size(), row_size()};
  }

  // Same storage, new shape; sizes must agree.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(float value);
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> values_;
};

// Rows `indices` of `source` stacked in order.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices);

// Concatenates along the batch axis; all trailing shapes must agree.
Tensor concat_rows(std::span<const Tensor* const> parts);

// Concatenates two [N, ...] tensors along axis 1 ([N, a] + [N, b]).
Tensor concat_columns(std::span<const Tensor* const> parts);

// Column block [begin, begin + width) of a [N, D] tensor.
Tensor slice_columns(const Tensor& source, std::size_t begin, std::size_t width);

// dst[cols x rows] = src[rows x cols]^T
void transpose(std::size_t rows, std::size_t cols, const float* src, float* dst);

double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace vfl
