#pragma once

#include <span>
#include <vector>

#include "vfl/core/tensor.hpp"

namespace vfl::nn {

using Label = int;

// Loss value together with its gradient w.r.t. the tensor it was computed on.
struct LossValue {
  double value = 0.0;
  Tensor grad;
};

Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

// sum_i weight_i * H(onehot(label_i), softmax(logits_i)) / normalizer.
// Empty weights means all ones; normalizer 0 means the row count.
LossValue cross_entropy(const Tensor& logits, std::span<const Label> labels,
                        std::span<const float> weights = {}, double normalizer = 0.0);

// Per-row cross entropy without reduction.
std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const Label> labels);

// Mean squared error over all elements; grad w.r.t. prediction.
LossValue mean_squared_error(const Tensor& prediction, const Tensor& target);

// log(sigmoid(z)) computed without overflow.
double log_sigmoid(double z);

std::vector<Label> argmax_rows(const Tensor& logits);

}  // namespace vfl::nn
