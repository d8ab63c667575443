#pragma once

#include <span>
#include <string>
#include <vector>

#include "vfl/attack/poison.hpp"
#include "vfl/nn/loss.hpp"

namespace vfl::baselines {

using nn::Label;

// Labels the adversary believes each training sample has: the revealed label
// where known, otherwise the nearest class centroid (Euclidean, over the
// known samples' local features).
std::vector<Label> believed_labels(const Tensor& local_features, std::span<const std::size_t> known_indices,
                                   std::span<const Label> known_labels);

struct LraResult {
  attack::PoisonTable table;
  std::vector<std::size_t> donors;   // donor per table row
  std::vector<std::size_t> skipped;  // victims without an eligible donor
};

// For floor(rho * n) seed-chosen victims, replace the local slice with the
// slice of a donor whose believed label differs. Deterministic under seed.
// ValidationError when no labels are known.
LraResult lra_poison(const Tensor& local_features, std::span<const std::size_t> known_indices,
                     std::span<const Label> known_labels, double rho, std::uint64_t seed);

// Same, with the victim set supplied (for nested/matched poison sets).
LraResult lra_poison_set(const Tensor& local_features, std::span<const std::size_t> known_indices,
                         std::span<const Label> known_labels, std::vector<std::size_t> victims,
                         std::uint64_t seed);

}  // namespace vfl::baselines
