#include <algorithm>
#include <limits>

#include "vfl/core/error.hpp"
#include "vfl/core/rng.hpp"
#include "vfl/data/sources.hpp"

namespace vfl::data {
namespace {

Split draw(std::size_t n, const std::vector<float>& centres, std::size_t dims,
           std::size_t classes, Rng& rng) {
  Split split;
  split.features = Tensor({n, dims});
  split.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Round-robin labels keep the classes balanced.
    const std::size_t k = i % classes;
    split.labels[i] = Label(k);
    for (std::size_t d = 0; d < dims; ++d)
      split.features[i * dims + d] = centres[k * dims + d] + float(rng.normal());
  }
  // Shuffle so batches mix classes.
  auto order = rng.permutation(n);
  Split shuffled;
  shuffled.features = gather_rows(split.features, order);
  shuffled.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) shuffled.labels[i] = split.labels[order[i]];
  return shuffled;
}

}  // namespace

Dataset make_synthetic(const SyntheticOptions& o) {
  if (o.classes < 1 || o.dims < 1 || o.n_train < o.classes)
    throw ValidationError("synthetic dataset needs at least one sample per class");
  Rng rng(derive_seed(o.seed, "synthetic"));
  std::vector<float> centres(o.classes * o.dims);
  for (float& c : centres) c = float(o.separation * rng.normal());

  Dataset ds;
  ds.name = "synthetic";
  ds.geometry = {Layout::kTabular, 1, 1, o.dims};
  ds.num_classes = o.classes;
  ds.range = FeatureRange::unit(1);
  ds.train = draw(o.n_train, centres, o.dims, o.classes, rng);
  ds.test = draw(o.n_test, centres, o.dims, o.classes, rng);

  std::vector<float> lo(o.dims, std::numeric_limits<float>::max());
  std::vector<float> hi(o.dims, std::numeric_limits<float>::lowest());
  for (std::size_t i = 0; i < o.n_train; ++i)
    for (std::size_t d = 0; d < o.dims; ++d) {
      lo[d] = std::min(lo[d], ds.train.features[i * o.dims + d]);
      hi[d] = std::max(hi[d], ds.train.features[i * o.dims + d]);
    }
  for (Split* split : {&ds.train, &ds.test})
    for (std::size_t i = 0; i < split->size(); ++i)
      for (std::size_t d = 0; d < o.dims; ++d) {
        float& v = split->features[i * o.dims + d];
        const float span = std::max(hi[d] - lo[d], 1e-6f);
        v = std::clamp((v - lo[d]) / span, 0.0f, 1.0f);
      }
  return ds;
}

}  // namespace vfl::data
