#pragma once

#include <cstddef>
#include <span>

#include "vfl/nn/layer.hpp"

namespace vfl::nn {

// `layers` fully-connected layers with ReLU between them; the last layer is
// linear. FCNN-3 is make_fcnn(in, 256, out, 3).
Sequential make_fcnn(std::size_t in_features, std::size_t hidden, std::size_t out_features,
                     std::size_t layers, Rng& rng);

// ResNet-18 (four stages of two basic blocks) over an NCHW input band,
// ending in global average pooling and a linear embedding head.
Sequential make_resnet18(std::size_t in_channels, std::size_t base_width,
                         std::size_t embedding_dim, Rng& rng);

// Seven-level auto-encoder: widths {hidden1, hidden2, bottleneck} mirror
// around the bottleneck, giving levels in, h1, h2, b, h2, h1, in.
Sequential make_dae(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                    std::size_t bottleneck, Rng& rng);

}  // namespace vfl::nn
