#pragma once

#include <vector>

#include "vfl/data/dataset.hpp"

namespace vfl::protocol {

using data::Geometry;

// The slice of every sample owned by one participant. Images are split into
// contiguous horizontal bands of rows (all channels, full width); tabular
// data into contiguous column ranges. [begin, end) indexes rows or columns.
struct FeaturePartition {
  std::size_t participant_id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Geometry source;
  std::size_t total_feature_dims = 0;

  std::size_t extent() const { return end - begin; }
  Geometry local_geometry() const;
  std::size_t feature_dims() const { return local_geometry().features(); }

  // [N, source features] -> [N, local features] (images keep NCHW layout).
  Tensor extract(const Tensor& samples) const;
};

// Band heights (images) or column counts (tabular) in spatial order;
// participant i owns the i-th band.
struct SplitSpec {
  std::vector<std::size_t> extents;
};

// Equal bands; the remainder goes to the last participant.
SplitSpec equal_split(const Geometry& geometry, std::size_t n_participants);

// Adversary owns the first `adversary_extent` rows/columns, the single honest
// participant the rest.
SplitSpec adversary_band(const Geometry& geometry, std::size_t adversary_extent);

// Throws ValidationError unless the extents are positive and exactly cover
// the split axis, and n_participants matches (1 is allowed: identity).
std::vector<FeaturePartition> partition_features(const Geometry& geometry,
                                                 std::size_t n_participants,
                                                 const SplitSpec& spec);

}  // namespace vfl::protocol
