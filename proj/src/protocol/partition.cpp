#include "vfl/protocol/partition.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "vfl/core/error.hpp"

namespace vfl::protocol {
namespace {

std::size_t split_axis(const Geometry& g) { return g.is_image() ? g.height : g.features(); }

}  // namespace

Geometry FeaturePartition::local_geometry() const {
  Geometry g = source;
  if (g.is_image()) {
    g.height = extent();
  } else {
    g.channels = 1;
    g.height = 1;
    g.width = extent();
  }
  return g;
}

Tensor FeaturePartition::extract(const Tensor& samples) const {
  const std::size_t n = samples.rows();
  if (n > 0 && samples.row_size() != source.features())
    throw ValidationError("sample width " + std::to_string(samples.row_size()) +
                          " does not match partitioned geometry " +
                          std::to_string(source.features()));
  if (!source.is_image()) return slice_columns(samples, begin, extent());

  const std::size_t c = source.channels, h = source.height, w = source.width;
  Tensor out({n, c, extent(), w});
  const std::size_t band = extent() * w;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::memcpy(out.data() + (i * c + ch) * band,
                  samples.data() + ((i * c + ch) * h + begin) * w, band * sizeof(float));
  return out;
}

SplitSpec equal_split(const Geometry& geometry, std::size_t n_participants) {
  const std::size_t axis = split_axis(geometry);
  if (n_participants == 0 || n_participants > axis)
    throw ValidationError("cannot split " + std::to_string(axis) + " rows/columns among " +
                          std::to_string(n_participants) + " participants");
  SplitSpec spec;
  spec.extents.assign(n_participants, axis / n_participants);
  spec.extents.back() += axis % n_participants;
  return spec;
}

SplitSpec adversary_band(const Geometry& geometry, std::size_t adversary_extent) {
  const std::size_t axis = split_axis(geometry);
  if (adversary_extent == 0 || adversary_extent >= axis)
    throw ValidationError("adversary extent must lie in [1, " + std::to_string(axis - 1) + "]");
  return SplitSpec{{adversary_extent, axis - adversary_extent}};
}

std::vector<FeaturePartition> partition_features(const Geometry& geometry,
                                                 std::size_t n_participants,
                                                 const SplitSpec& spec) {
  if (n_participants == 0) throw ValidationError("need at least one participant");
  if (spec.extents.size() != n_participants)
    throw ValidationError("split spec has " + std::to_string(spec.extents.size()) +
                          " bands for " + std::to_string(n_participants) + " participants");
  const std::size_t axis = split_axis(geometry);
  if (std::any_of(spec.extents.begin(), spec.extents.end(), [](std::size_t e) { return e == 0; }))
    throw ValidationError("split spec contains an empty band");
  const std::size_t covered = std::accumulate(spec.extents.begin(), spec.extents.end(), std::size_t{0});
  if (covered != axis)
    throw ValidationError("split spec covers " + std::to_string(covered) + " of " +
                          std::to_string(axis) + " rows/columns");

  std::vector<FeaturePartition> parts;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n_participants; ++i) {
    parts.push_back({i, cursor, cursor + spec.extents[i], geometry, geometry.features()});
    cursor += spec.extents[i];
  }
  return parts;
}

}  // namespace vfl::protocol
