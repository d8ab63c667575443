#include "vfl/nn/layer.hpp"

#include "vfl/core/error.hpp"

namespace vfl::nn {

void Layer::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0f);
}

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

Tensor Sequential::forward(const Tensor& input, bool training) {
  if (layers_.empty()) return input;
  Tensor x = layers_.front()->forward(input, training);
  for (std::size_t i = 1; i < layers_.size(); ++i) x = layers_[i]->forward(x, training);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_output) {
  if (layers_.empty()) return grad_output;
  Tensor g = layers_.back()->backward(grad_output);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> all;
  for (auto& layer : layers_) {
    auto ps = layer->parameters();
    all.insert(all.end(), ps.begin(), ps.end());
  }
  return all;
}

std::vector<Tensor*> Sequential::buffers() {
  std::vector<Tensor*> all;
  for (auto& layer : layers_) {
    auto bs = layer->buffers();
    all.insert(all.end(), bs.begin(), bs.end());
  }
  return all;
}

std::size_t parameter_count(Layer& layer) {
  std::size_t total = 0;
  for (Parameter* p : layer.parameters()) total += p->value.size();
  return total;
}

void copy_state(Layer& source, Layer& target) {
  auto src = source.parameters();
  auto dst = target.parameters();
  if (src.size() != dst.size()) throw ConfigError("copy_state: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->value.shape() != dst[i]->value.shape())
      throw ConfigError("copy_state: shape mismatch for " + src[i]->name);
    dst[i]->value = src[i]->value;
  }
  auto sb = source.buffers();
  auto db = target.buffers();
  if (sb.size() != db.size()) throw ConfigError("copy_state: buffer count mismatch");
  for (std::size_t i = 0; i < sb.size(); ++i) *db[i] = *sb[i];
}

}  // namespace vfl::nn
