#pragma once

#include <cstddef>

#include "vfl/nn/layer.hpp"

namespace vfl::nn {

// y = x W + b over flattened rows. W is stored [in x out].
class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features, Rng& rng);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  LayerPtr clone() const override { return std::make_unique<Dense>(*this); }
  std::string kind() const override { return "dense"; }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<ReLU>(*this); }
  std::string kind() const override { return "relu"; }

 private:
  Tensor input_;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<LeakyReLU>(*this); }
  std::string kind() const override { return "leaky_relu"; }

 private:
  float slope_;
  Tensor input_;
};

class Tanh final : public Layer {
 public:
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<Tanh>(*this); }
  std::string kind() const override { return "tanh"; }

 private:
  Tensor output_;
};

class Sigmoid final : public Layer {
 public:
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<Sigmoid>(*this); }
  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor output_;
};

// [N, ...] -> [N, prod(...)]
class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<Flatten>(*this); }
  std::string kind() const override { return "flatten"; }

 private:
  Shape input_shape_;
};

// [N, ...] -> [N, shape...]
class Reshape final : public Layer {
 public:
  explicit Reshape(Shape per_sample) : per_sample_(std::move(per_sample)) {}
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<Reshape>(*this); }
  std::string kind() const override { return "reshape"; }

 private:
  Shape per_sample_;
  Shape input_shape_;
};

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

std::size_t conv_output_extent(std::size_t input, const ConvGeometry& g);

// NCHW convolution through im2col + GEMM. Weight [out, in * k * k].
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry,
         Rng& rng, bool with_bias = true);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override;
  LayerPtr clone() const override { return std::make_unique<Conv2d>(*this); }
  std::string kind() const override { return "conv2d"; }

  Parameter& weight() { return weight_; }

 private:
  std::size_t in_channels_;
  std::size_t out_channels_;
  ConvGeometry geometry_;
  bool with_bias_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// Transposed convolution (the adjoint of Conv2d's input map). The output
// extent is (in - 1) * stride - 2 * padding + kernel + output_padding.
// Weight [in, out * k * k].
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(std::size_t in_channels, std::size_t out_channels,
                  ConvGeometry geometry, std::size_t output_padding_h,
                  std::size_t output_padding_w, Rng& rng);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  LayerPtr clone() const override { return std::make_unique<ConvTranspose2d>(*this); }
  std::string kind() const override { return "conv_transpose2d"; }

 private:
  std::size_t in_channels_;
  std::size_t out_channels_;
  ConvGeometry geometry_;
  std::size_t output_padding_h_;
  std::size_t output_padding_w_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

// Normalizes over every axis except axis 1 ([N, C] or [N, C, H, W]).
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
  LayerPtr clone() const override { return std::make_unique<BatchNorm>(*this); }
  std::string kind() const override { return "batch_norm"; }

 private:
  std::size_t channels_;
  float momentum_;
  float eps_;
  Parameter gamma_;
  Parameter beta_;
  Tensor running_mean_;
  Tensor running_var_;
  Tensor normalized_;
  std::vector<float> inv_std_;
  Shape input_shape_;
  bool trained_batch_ = false;
};

// [N, C, H, W] -> [N, C]
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  LayerPtr clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
  std::string kind() const override { return "global_avg_pool"; }

 private:
  Shape input_shape_;
};

// ResNet basic block: relu(bn(conv(relu(bn(conv(x))))) + shortcut(x)).
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override;
  std::vector<Tensor*> buffers() override;
  LayerPtr clone() const override { return std::make_unique<ResidualBlock>(*this); }
  std::string kind() const override { return "residual_block"; }

 private:
  Sequential main_;
  Sequential shortcut_;  // empty = identity
  Tensor sum_;
};

}  // namespace vfl::nn
