#include "vfl/attack/poison.hpp"

#include <algorithm>
#include <cmath>

#include "vfl/attack/pgan.hpp"
#include "vfl/core/error.hpp"

namespace vfl::attack {

std::size_t poison_count(std::size_t n, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("poison fraction must lie in [0, 1]");
  return std::min(n, std::size_t(std::floor(rho * double(n) + 1e-9)));
}

PoisonedBatch poison_batch(PerturbationGenerator& generator, const Tensor& batch, double rho,
                           const data::FeatureRange& range, std::uint64_t seed) {
  const std::size_t n = batch.rows();
  PoisonedBatch out{batch, std::vector<std::uint8_t>(n, 0)};
  const std::size_t k = poison_count(n, rho);
  if (k == 0) return out;
  Rng rng(derive_seed(seed, "poison_batch"));
  const auto chosen = rng.sample_without_replacement(n, k);
  const Tensor x = gather_rows(batch, chosen);
  const Tensor poisoned = perturb(generator, x, sample_noise(k, generator.noise_dim(), rng), range);
  for (std::size_t j = 0; j < k; ++j) {
    auto src = poisoned.row(j);
    std::copy(src.begin(), src.end(), out.features.row(chosen[j]).begin());
    out.mask[chosen[j]] = 1;
  }
  return out;
}

std::vector<std::size_t> select_poison_set(std::size_t n, double rho, std::uint64_t seed) {
  const std::size_t k = poison_count(n, rho);
  Rng rng(derive_seed(seed, "poison_set"));
  auto order = rng.permutation(n);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

PoisonTable::PoisonTable(std::size_t n, std::vector<std::size_t> indices, Tensor rows)
    : slot_(n, kNone), indices_(std::move(indices)), rows_(std::move(rows)) {
  if (rows_.rows() != indices_.size() && !indices_.empty())
    throw ValidationError("poison table needs one row per index");
  for (std::size_t j = 0; j < indices_.size(); ++j) {
    if (indices_[j] >= n) throw ValidationError("poison index out of range");
    slot_[indices_[j]] = j;
  }
}

protocol::BatchTransform replace_rows(std::shared_ptr<const PoisonTable> table) {
  return [table = std::move(table)](const Tensor& batch, std::span<const std::size_t> indices,
                                    std::size_t) {
    Tensor out = batch;
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (!table->contains(indices[r])) continue;
      auto src = table->row_for(indices[r]);
      if (src.size() != out.row_size()) throw ProtocolError("poison row width mismatch");
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  };
}

PoisonTable build_pgan_table(PerturbationGenerator& generator, const Tensor& features,
                             std::vector<std::size_t> indices, const data::FeatureRange& range,
                             std::uint64_t seed) {
  Rng rng(derive_seed(seed, "pgan_noise"));
  const std::size_t k = indices.size();
  const Tensor noise = sample_noise(k, generator.noise_dim(), rng);
  Shape shape = features.shape();
  shape[0] = k;
  Tensor rows(shape);
  constexpr std::size_t kChunk = 1024;
  for (std::size_t begin = 0; begin < k; begin += kChunk) {
    const std::size_t end = std::min(k, begin + kChunk);
    std::vector<std::size_t> local(end - begin), sel(indices.begin() + long(begin), indices.begin() + long(end));
    for (std::size_t j = begin; j < end; ++j) local[j - begin] = j;
    const Tensor poisoned = perturb(generator, gather_rows(features, sel), gather_rows(noise, local), range);
    std::copy(poisoned.data(), poisoned.data() + poisoned.size(), rows.data() + begin * rows.row_size());
  }
  return PoisonTable(features.rows(), std::move(indices), std::move(rows));
}

double mean_perturbation(const PoisonTable& table, const Tensor& features) {
  if (table.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < table.size(); ++j) {
    auto poisoned = table.rows().row(j);
    auto clean = features.row(table.indices()[j]);
    for (std::size_t i = 0; i < clean.size(); ++i) sum += std::abs(double(poisoned[i]) - clean[i]);
  }
  return sum / double(table.size() * features.row_size());
}

}  // namespace vfl::attack
