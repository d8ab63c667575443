#include "vfl/nn/models.hpp"

#include "vfl/core/error.hpp"
#include "vfl/nn/layers.hpp"

namespace vfl::nn {

Sequential make_fcnn(std::size_t in_features, std::size_t hidden, std::size_t out_features,
                     std::size_t layers, Rng& rng) {
  if (layers < 2) throw ConfigError("make_fcnn: need at least two layers");
  Sequential net;
  net.add(std::make_unique<Dense>(in_features, hidden, rng)).add(std::make_unique<ReLU>());
  for (std::size_t i = 2; i < layers; ++i)
    net.add(std::make_unique<Dense>(hidden, hidden, rng)).add(std::make_unique<ReLU>());
  net.add(std::make_unique<Dense>(hidden, out_features, rng));
  return net;
}

Sequential make_resnet18(std::size_t in_channels, std::size_t base_width,
                         std::size_t embedding_dim, Rng& rng) {
  Sequential net;
  net.add(std::make_unique<Conv2d>(in_channels, base_width, ConvGeometry{3, 1, 1}, rng, false))
      .add(std::make_unique<BatchNorm>(base_width))
      .add(std::make_unique<ReLU>());
  std::size_t channels = base_width;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t width = base_width << stage;
    const std::size_t stride = stage == 0 ? 1 : 2;
    net.add(std::make_unique<ResidualBlock>(channels, width, stride, rng));
    net.add(std::make_unique<ResidualBlock>(width, width, 1, rng));
    channels = width;
  }
  net.add(std::make_unique<GlobalAvgPool>()).add(std::make_unique<Dense>(channels, embedding_dim, rng));
  return net;
}

Sequential make_dae(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                    std::size_t bottleneck, Rng& rng) {
  Sequential net;
  net.add(std::make_unique<Dense>(input_dim, hidden1, rng)).add(std::make_unique<ReLU>())
      .add(std::make_unique<Dense>(hidden1, hidden2, rng)).add(std::make_unique<ReLU>())
      .add(std::make_unique<Dense>(hidden2, bottleneck, rng)).add(std::make_unique<ReLU>())
      .add(std::make_unique<Dense>(bottleneck, hidden2, rng)).add(std::make_unique<ReLU>())
      .add(std::make_unique<Dense>(hidden2, hidden1, rng)).add(std::make_unique<ReLU>())
      .add(std::make_unique<Dense>(hidden1, input_dim, rng));
  return net;
}

}  // namespace vfl::nn
