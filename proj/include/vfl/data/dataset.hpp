#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vfl/core/tensor.hpp"
#include "vfl/nn/loss.hpp"

namespace vfl::data {

using nn::Label;

enum class Layout { kImage, kTabular };

// Images are stored [N, C, H, W]; tabular data [N, D].
struct Geometry {
  Layout layout = Layout::kTabular;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t features() const { return channels * height * width; }
  bool is_image() const { return layout == Layout::kImage; }
};

// Closed interval of valid values for each channel after normalization.
struct FeatureRange {
  std::vector<float> lo;
  std::vector<float> hi;

  static FeatureRange unit(std::size_t channels) {
    return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
  }
};

struct Split {
  Tensor features;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  std::string name;
  Geometry geometry;
  std::size_t num_classes = 0;
  FeatureRange range;
  Split train;
  Split test;
};

// Per-channel (x - mean) / std using training statistics; updates range.
void standardize_channels(Dataset& dataset);

// First `n_train` / `n_test` samples of each split (no-op when larger).
Dataset truncate(Dataset dataset, std::size_t n_train, std::size_t n_test);

}  // namespace vfl::data
