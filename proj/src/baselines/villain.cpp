#include "vfl/baselines/villain.hpp"

#include <cmath>

#include "vfl/core/error.hpp"

namespace vfl::baselines {

std::vector<float> VillainTrigger::epsilon() const {
  std::vector<float> eps(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const float delta = (i % 4) < 2 ? 1.0f : -1.0f;
    eps[i] = mask[i] ? beta * delta : 0.0f;
  }
  return eps;
}

std::vector<std::uint8_t> leading_mask(std::size_t dim, double fraction) {
  const std::size_t covered = std::min(dim, std::size_t(std::ceil(double(dim) * fraction)));
  std::vector<std::uint8_t> mask(dim, 0);
  std::fill(mask.begin(), mask.begin() + long(covered), 1);
  return mask;
}

VillainTrigger default_trigger(std::size_t dim) { return {0.4f, leading_mask(dim)}; }

std::vector<float> villain_poison(std::span<const float> embedding_row, const VillainTrigger& trigger) {
  if (trigger.mask.size() != embedding_row.size())
    throw ValidationError("trigger mask has " + std::to_string(trigger.mask.size()) +
                          " entries for a " + std::to_string(embedding_row.size()) + "-dim embedding");
  const auto eps = trigger.epsilon();
  std::vector<float> out(embedding_row.begin(), embedding_row.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps[i];
  return out;
}

protocol::BatchTransform villain_transform(VillainTrigger trigger,
                                           std::shared_ptr<const std::vector<std::uint8_t>> poisoned) {
  return [trigger = std::move(trigger), poisoned = std::move(poisoned)](
             const Tensor& batch, std::span<const std::size_t> indices, std::size_t) {
    Tensor out = batch;
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (!(*poisoned)[indices[r]]) continue;
      const auto row = villain_poison(out.row(r), trigger);
      std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
  };
}

}  // namespace vfl::baselines
