#include "vfl/data/dataset.hpp"

#include <cmath>

#include "vfl/core/error.hpp"

namespace vfl::data {
namespace {

void normalize_split(Tensor& x, const Geometry& g, const std::vector<double>& mean,
                     const std::vector<double>& stddev) {
  const std::size_t plane = g.height * g.width;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      float* p = x.data() + (n * g.channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = float((p[i] - mean[c]) / stddev[c]);
    }
  }
}

Split head(Split split, std::size_t n) {
  if (n >= split.size()) return split;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  split.features = gather_rows(split.features, idx);
  split.labels.resize(n);
  return split;
}

}  // namespace

void standardize_channels(Dataset& dataset) {
  const Geometry& g = dataset.geometry;
  const std::size_t plane = g.height * g.width;
  const Tensor& x = dataset.train.features;
  if (x.empty()) throw DataError("standardize_channels: empty training split");
  std::vector<double> mean(g.channels, 0.0), var(g.channels, 0.0);
  const double count = double(x.rows() * plane);
  for (std::size_t n = 0; n < x.rows(); ++n)
    for (std::size_t c = 0; c < g.channels; ++c) {
      const float* p = x.data() + (n * g.channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) mean[c] += p[i];
    }
  for (double& m : mean) m /= count;
  for (std::size_t n = 0; n < x.rows(); ++n)
    for (std::size_t c = 0; c < g.channels; ++c) {
      const float* p = x.data() + (n * g.channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) var[c] += (p[i] - mean[c]) * (p[i] - mean[c]);
    }
  std::vector<double> stddev(g.channels);
  for (std::size_t c = 0; c < g.channels; ++c) stddev[c] = std::sqrt(var[c] / count) + 1e-12;

  normalize_split(dataset.train.features, g, mean, stddev);
  normalize_split(dataset.test.features, g, mean, stddev);
  for (std::size_t c = 0; c < g.channels; ++c) {
    dataset.range.lo[c] = float((dataset.range.lo[c] - mean[c]) / stddev[c]);
    dataset.range.hi[c] = float((dataset.range.hi[c] - mean[c]) / stddev[c]);
  }
}

Dataset truncate(Dataset dataset, std::size_t n_train, std::size_t n_test) {
  dataset.train = head(std::move(dataset.train), n_train);
  dataset.test = head(std::move(dataset.test), n_test);
  return dataset;
}

}  // namespace vfl::data
