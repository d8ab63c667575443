#pragma once

#include <memory>
#include <span>

#include "vfl/attack/generator.hpp"
#include "vfl/protocol/participant.hpp"

namespace vfl::attack {

// floor(rho * n), robust to rho values such as 0.2 that are inexact in binary.
std::size_t poison_count(std::size_t n, double rho);

struct PoisonedBatch {
  Tensor features;
  std::vector<std::uint8_t> mask;  // 1 = poisoned row
};

// Replaces exactly poison_count(n, rho) seed-chosen rows by perturb(G, .).
PoisonedBatch poison_batch(PerturbationGenerator& generator, const Tensor& batch, double rho,
                           const data::FeatureRange& range, std::uint64_t seed);

// Run-level poison set: the first poison_count(n, rho) entries of a fixed
// seed permutation, sorted. Sets for smaller rho are subsets of larger ones.
std::vector<std::size_t> select_poison_set(std::size_t n, double rho, std::uint64_t seed);

// Training-set rows to substitute whenever the sample is requested.
class PoisonTable {
 public:
  PoisonTable(std::size_t n, std::vector<std::size_t> indices, Tensor rows);

  bool contains(std::size_t sample) const { return slot_[sample] != kNone; }
  std::size_t size() const { return indices_.size(); }
  const std::vector<std::size_t>& indices() const { return indices_; }
  const Tensor& rows() const { return rows_; }
  std::span<const float> row_for(std::size_t sample) const { return rows_.row(slot_[sample]); }

 private:
  static constexpr std::size_t kNone = ~std::size_t{0};
  std::vector<std::size_t> slot_;
  std::vector<std::size_t> indices_;
  Tensor rows_;
};

// Feature transform that swaps in the table's rows for poisoned samples.
protocol::BatchTransform replace_rows(std::shared_ptr<const PoisonTable> table);

// Poisoned rows for a P-GAN attack: perturb(G, x_i, z_i) with per-sample
// noise fixed by the seed.
PoisonTable build_pgan_table(PerturbationGenerator& generator, const Tensor& features,
                             std::vector<std::size_t> indices, const data::FeatureRange& range,
                             std::uint64_t seed);

// Mean |G(x_i, z_i)| over the table's rows, for reporting.
double mean_perturbation(const PoisonTable& table, const Tensor& features);

}  // namespace vfl::attack
