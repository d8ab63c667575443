#include "vfl/baselines/lra.hpp"

#include <iostream>
#include <limits>
#include <map>

#include "vfl/core/error.hpp"

namespace vfl::baselines {

std::vector<Label> believed_labels(const Tensor& local_features, std::span<const std::size_t> known_indices,
                                   std::span<const Label> known_labels) {
  if (known_indices.empty()) throw ValidationError("label replacement needs at least one known label");
  if (known_indices.size() != known_labels.size())
    throw ValidationError("known indices and labels differ in length");
  const std::size_t n = local_features.rows(), d = local_features.row_size();

  std::map<Label, std::pair<std::vector<double>, std::size_t>> sums;
  for (std::size_t j = 0; j < known_indices.size(); ++j) {
    auto& [sum, count] = sums[known_labels[j]];
    sum.resize(d, 0.0);
    auto row = local_features.row(known_indices[j]);
    for (std::size_t k = 0; k < d; ++k) sum[k] += row[k];
    ++count;
  }
  std::vector<Label> classes;
  std::vector<std::vector<float>> centroids;
  for (auto& [label, entry] : sums) {
    classes.push_back(label);
    std::vector<float> c(d);
    for (std::size_t k = 0; k < d; ++k) c[k] = float(entry.first[k] / double(entry.second));
    centroids.push_back(std::move(c));
  }

  std::vector<Label> believed(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = local_features.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = double(row[k]) - centroids[c][k];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        believed[i] = classes[c];
      }
    }
  }
  for (std::size_t j = 0; j < known_indices.size(); ++j) believed[known_indices[j]] = known_labels[j];
  return believed;
}

LraResult lra_poison_set(const Tensor& local_features, std::span<const std::size_t> known_indices,
                         std::span<const Label> known_labels, std::vector<std::size_t> victims,
                         std::uint64_t seed) {
  const auto believed = believed_labels(local_features, known_indices, known_labels);
  const std::size_t n = local_features.rows();
  Rng rng(derive_seed(seed, "lra_donors"));
  constexpr std::size_t kTries = 64;

  std::vector<std::size_t> kept, donors, skipped;
  for (std::size_t v : victims) {
    std::size_t donor = n;
    for (std::size_t t = 0; t < kTries && donor == n; ++t) {
      const std::size_t cand = rng.below(n);
      if (believed[cand] != believed[v]) donor = cand;
    }
    if (donor == n) {
      skipped.push_back(v);
      continue;
    }
    kept.push_back(v);
    donors.push_back(donor);
  }
  if (!skipped.empty())
    std::cerr << "warning: label replacement skipped " << skipped.size()
              << " samples with no differently-labelled donor\n";
  Tensor rows = gather_rows(local_features, donors);
  if (kept.empty()) {
    Shape shape = local_features.shape();
    shape[0] = 0;
    rows = Tensor(shape);
  }
  return {attack::PoisonTable(n, std::move(kept), std::move(rows)), std::move(donors), std::move(skipped)};
}

LraResult lra_poison(const Tensor& local_features, std::span<const std::size_t> known_indices,
                     std::span<const Label> known_labels, double rho, std::uint64_t seed) {
  return lra_poison_set(local_features, known_indices, known_labels,
                        attack::select_poison_set(local_features.rows(), rho, seed), seed);
}

}  // namespace vfl::baselines
