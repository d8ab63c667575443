#pragma once

#include <vector>

#include "vfl/nn/layer.hpp"

namespace vfl::nn {

class Optimizer {
 public:
  explicit Optimizer(std::vector<Parameter*> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;
  Optimizer(const Optimizer&) = delete;
  Optimizer& operator=(const Optimizer&) = delete;

  virtual void step() = 0;
  // Slot tensors (momentum, moments) for checkpointing.
  virtual std::vector<Tensor*> state() = 0;

  void zero_grad();
  const std::vector<Parameter*>& params() const { return params_; }

 protected:
  std::vector<Parameter*> params_;
};

struct SgdOptions {
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
};

class MomentumSgd final : public Optimizer {
 public:
  MomentumSgd(std::vector<Parameter*> params, SgdOptions options);
  void step() override;
  std::vector<Tensor*> state() override;
  const SgdOptions& options() const { return options_; }

 private:
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

struct AdamOptions {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);
  void step() override;
  std::vector<Tensor*> state() override;

 private:
  AdamOptions options_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  Tensor steps_;  // single element, kept as a tensor so it checkpoints
};

}  // namespace vfl::nn
