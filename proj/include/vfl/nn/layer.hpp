#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vfl/core/rng.hpp"
#include "vfl/core/tensor.hpp"

namespace vfl::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

// A differentiable stage. forward() caches whatever backward() needs, so a
// backward call always refers to the most recent forward call. Parameter
// gradients accumulate until zero_grad().
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& input, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  // Non-trainable state that belongs in checkpoints (running statistics).
  virtual std::vector<Tensor*> buffers() { return {}; }

  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string kind() const = 0;

  void zero_grad();
};

using LayerPtr = std::unique_ptr<Layer>;

class Sequential final : public Layer {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr> layers) : layers_(std::move(layers)) {}
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Sequential& add(LayerPtr layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::vector<Parameter*> parameters() override;
  std::vector<Tensor*> buffers() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }
  std::string kind() const override { return "sequential"; }

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerPtr> layers_;
};

std::size_t parameter_count(Layer& layer);

// Copies parameter values and buffers from `source` into `target`; both
// must have identical structure.
void copy_state(Layer& source, Layer& target);

}  // namespace vfl::nn
