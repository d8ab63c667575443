#pragma once

#include "vfl/data/dataset.hpp"
#include "vfl/nn/layer.hpp"

namespace vfl::attack {

// G(x, z): an encoder over the local features, noise concatenated at the
// bottleneck, and a decoder back to the input shape with a tanh output
// scaled by `scale`. Images use three stride-2 convolutions mirrored by
// three transposed convolutions; tabular data uses dense layers.
class PerturbationGenerator {
 public:
  PerturbationGenerator(const data::Geometry& geometry, std::size_t noise_dim, float scale,
                        Rng& rng, std::size_t width = 32);

  // x: [N, local features...], z: [N, noise_dim]. Output has x's shape.
  Tensor forward(const Tensor& x, const Tensor& z, bool training);
  // Accumulates parameter gradients for dLoss/dG(x, z).
  void backward(const Tensor& grad_output);

  std::vector<nn::Parameter*> parameters();
  std::vector<Tensor*> buffers();
  std::size_t noise_dim() const { return noise_dim_; }
  const data::Geometry& geometry() const { return geometry_; }

  nn::Sequential& encoder() { return encoder_; }
  nn::Sequential& decoder() { return decoder_; }

 private:
  data::Geometry geometry_;
  std::size_t noise_dim_;
  float scale_;
  nn::Sequential encoder_;
  nn::Sequential decoder_;
  Shape code_shape_;   // encoder output per sample
  Shape input_shape_;
};

// D(x): logit that x is clean; probability = sigmoid(logit).
nn::Sequential make_discriminator(const data::Geometry& geometry, Rng& rng, std::size_t width = 32);

// Encoder/decoder extents for one stride-2, kernel-3, padding-1 stage.
std::size_t downsampled(std::size_t extent);

}  // namespace vfl::attack
