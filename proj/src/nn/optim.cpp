#include "vfl/nn/optim.hpp"

#include <cmath>

#include "vfl/kernels/kernels.hpp"

namespace vfl::nn {

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->grad.fill(0.0f);
}

MomentumSgd::MomentumSgd(std::vector<Parameter*> params, SgdOptions options)
    : Optimizer(std::move(params)), options_(options) {
  velocity_.reserve(params_.size());
  for (Parameter* p : params_) velocity_.emplace_back(p->value.shape());
}

void MomentumSgd::step() {
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    k.sgd_momentum_step(p.value.size(), options_.lr, options_.momentum, options_.weight_decay,
                        p.grad.data(), velocity_[i].data(), p.value.data());
  }
}

std::vector<Tensor*> MomentumSgd::state() {
  std::vector<Tensor*> out;
  for (Tensor& v : velocity_) out.push_back(&v);
  return out;
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : Optimizer(std::move(params)), options_(options), steps_({1}) {
  for (Parameter* p : params_) {
    first_.emplace_back(p->value.shape());
    second_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  steps_[0] += 1.0f;
  const double t = steps_[0];
  const double correction1 = 1.0 - std::pow(double(options_.beta1), t);
  const double correction2 = 1.0 - std::pow(double(options_.beta2), t);
  const float step_size = float(options_.lr * std::sqrt(correction2) / correction1);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    float* m = first_[i].data();
    float* v = second_[i].data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const float g = p.grad[j];
      m[j] = options_.beta1 * m[j] + (1.0f - options_.beta1) * g;
      v[j] = options_.beta2 * v[j] + (1.0f - options_.beta2) * g * g;
      p.value[j] -= step_size * m[j] / (std::sqrt(v[j]) + options_.eps);
    }
  }
}

std::vector<Tensor*> Adam::state() {
  std::vector<Tensor*> out;
  for (auto& m : first_) out.push_back(&m);
  for (auto& v : second_) out.push_back(&v);
  out.push_back(&steps_);
  return out;
}

}  // namespace vfl::nn
