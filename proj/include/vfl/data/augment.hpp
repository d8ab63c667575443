#pragma once

#include "vfl/core/rng.hpp"
#include "vfl/data/dataset.hpp"

namespace vfl::data {

struct AugmentOptions {
  // Weak view: translation of up to max_shift pixels, optional flip.
  std::size_t max_shift = 2;
  bool horizontal_flip = false;
  // Strong view: ops_per_sample random operations, then cutout with a side
  // of up to cutout_fraction of the shorter image edge.
  std::size_t ops_per_sample = 2;
  double cutout_fraction = 0.5;
  // Tabular data: Gaussian jitter (scaled by the feature range) for the weak
  // view; stronger noise plus feature dropout for the strong view.
  double weak_jitter = 0.03;
  double strong_jitter = 0.15;
  double strong_dropout = 0.2;
};

// Digit datasets must not be flipped; everything else may be.
AugmentOptions default_augment_options(const std::string& dataset_name);

// Label-preserving weak and strong views of a batch laid out by `geometry`.
// Shapes are always preserved and outputs stay inside `range`.
class Augmenter {
 public:
  Augmenter(Geometry geometry, FeatureRange range, AugmentOptions options = {});

  Tensor weak(const Tensor& batch, Rng& rng) const;
  Tensor strong(const Tensor& batch, Rng& rng) const;

  const Geometry& geometry() const { return geometry_; }

 private:
  void check(const Tensor& batch) const;
  void weak_image(float* sample, Rng& rng) const;
  void strong_image(float* sample, Rng& rng) const;

  Geometry geometry_;
  FeatureRange range_;
  AugmentOptions options_;
};

}  // namespace vfl::data
