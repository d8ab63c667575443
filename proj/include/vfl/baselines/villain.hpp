#pragma once

#include <memory>
#include <span>
#include <vector>

#include "vfl/protocol/participant.hpp"

namespace vfl::baselines {

// epsilon = M * (beta * Delta), Delta = [+1, +1, -1, -1] repeated (the last
// tile truncated when the dimension is not a multiple of four).
struct VillainTrigger {
  float beta = 0.4f;
  std::vector<std::uint8_t> mask;  // one entry per embedding coordinate

  std::vector<float> epsilon() const;
};

// Mask covering coordinates [0, ceil(dim * fraction)).
std::vector<std::uint8_t> leading_mask(std::size_t dim, double fraction = 0.5);
VillainTrigger default_trigger(std::size_t dim);

// row + epsilon; ValidationError when the mask length differs from the row.
std::vector<float> villain_poison(std::span<const float> embedding_row, const VillainTrigger& trigger);

// Embedding transform adding the trigger to rows whose sample is poisoned.
protocol::BatchTransform villain_transform(VillainTrigger trigger,
                                           std::shared_ptr<const std::vector<std::uint8_t>> poisoned);

}  // namespace vfl::baselines
