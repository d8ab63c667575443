#include "vfl/surrogate/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "vfl/core/error.hpp"
#include "vfl/nn/layers.hpp"
#include "vfl/protocol/metrics.hpp"

namespace vfl::surrogate {

SurrogateModel::SurrogateModel(nn::Sequential backbone, std::size_t embedding_dim,
                               std::size_t n_classes, Rng& rng)
    : backbone_(std::move(backbone)), embedding_dim_(embedding_dim), n_classes_(n_classes) {
  head_.add(std::make_unique<nn::Dense>(embedding_dim, n_classes, rng));
}

Tensor SurrogateModel::logits(const Tensor& x, bool training) {
  return head_.forward(backbone_.forward(x, training), training);
}

Tensor SurrogateModel::backward(const Tensor& grad_logits) {
  return backbone_.backward(head_.backward(grad_logits));
}

std::vector<nn::Parameter*> SurrogateModel::parameters() {
  auto params = backbone_.parameters();
  for (nn::Parameter* p : head_.parameters()) params.push_back(p);
  return params;
}

SurrogateModel init_surrogate(const nn::Sequential& bottom_snapshot, const Tensor& probe,
                              std::size_t n_classes, std::uint64_t seed,
                              std::size_t expected_embedding_dim) {
  if (n_classes < 2) throw ConfigError("surrogate needs at least two classes");
  nn::Sequential backbone = bottom_snapshot;
  const std::size_t width = backbone.forward(probe, false).row_size();
  if (expected_embedding_dim && expected_embedding_dim != width)
    throw ConfigError("snapshot embeds to " + std::to_string(width) + " dims, head expects " +
                      std::to_string(expected_embedding_dim));
  Rng rng(derive_seed(seed, "surrogate_head"));
  return SurrogateModel(std::move(backbone), width, n_classes, rng);
}

LabeledIndices reveal_known_labels(std::span<const Label> truth, std::size_t k, std::uint64_t seed) {
  if (k > truth.size()) throw ValidationError("cannot reveal more labels than samples");
  Rng rng(derive_seed(seed, "known_labels"));
  LabeledIndices out;
  // Nested: the first k of a fixed permutation, so larger k extends smaller k.
  auto order = rng.permutation(truth.size());
  out.indices.assign(order.begin(), order.begin() + long(k));
  std::sort(out.indices.begin(), out.indices.end());
  for (std::size_t i : out.indices) out.labels.push_back(truth[i]);
  return out;
}

nn::LossValue supervised_loss(const Tensor& logits, std::span<const Label> labels) {
  if (labels.empty()) throw ValidationError("supervised loss needs a nonempty batch");
  return nn::cross_entropy(logits, labels);
}

UnsupervisedLoss unsupervised_loss(const Tensor& weak_logits, const Tensor& strong_logits, double tau) {
  if (weak_logits.shape() != strong_logits.shape())
    throw ValidationError("weak and strong logits differ in shape");
  const std::size_t n = weak_logits.rows();
  UnsupervisedLoss out;
  out.grad_strong = Tensor(strong_logits.shape());
  if (n == 0) return out;
  const Tensor q = nn::softmax_rows(weak_logits);
  std::vector<Label> pseudo(n, 0);
  std::vector<float> mask(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = q.row(i);
    const auto best = std::max_element(row.begin(), row.end());
    pseudo[i] = Label(best - row.begin());
    if (double(*best) > tau) {
      mask[i] = 1.0f;
      ++out.confident;
    }
  }
  if (out.confident == 0) return out;
  nn::LossValue ce = nn::cross_entropy(strong_logits, pseudo, mask, double(n));
  out.value = ce.value;
  out.grad_strong = std::move(ce.grad);
  return out;
}

SurrogateTrace train_surrogate(SurrogateModel& model, const Tensor& features,
                               const LabeledIndices& labeled, const data::Augmenter& augmenter,
                               const FixMatchOptions& options, std::uint64_t seed) {
  if (labeled.indices.empty()) throw ValidationError("surrogate training needs at least one label");
  if (options.lambda_u < 0) throw ValidationError("lambda_u must be nonnegative");
  const std::size_t n = features.rows();
  std::vector<std::uint8_t> is_labeled(n, 0);
  for (std::size_t i : labeled.indices) is_labeled.at(i) = 1;
  std::vector<std::size_t> unlabeled;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_labeled[i]) unlabeled.push_back(i);

  nn::MomentumSgd optimizer(model.parameters(), options.sgd);
  Rng rng(derive_seed(seed, "fixmatch"));
  SurrogateTrace trace;
  const std::size_t b = options.batch, ub = options.mu * options.batch;
  const bool use_unlabeled = options.lambda_u > 0 && ub > 0 && !unlabeled.empty();

  for (std::size_t step = 0; step < options.steps; ++step) {
    std::vector<std::size_t> li(b);
    std::vector<Label> ly(b);
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t pick = rng.below(labeled.indices.size());
      li[j] = labeled.indices[pick];
      ly[j] = labeled.labels[pick];
    }
    const Tensor xl = augmenter.weak(gather_rows(features, li), rng);

    Tensor joined = xl;
    Tensor weak_logits;
    if (use_unlabeled) {
      std::vector<std::size_t> ui(ub);
      for (auto& u : ui) u = unlabeled[rng.below(unlabeled.size())];
      const Tensor xu = gather_rows(features, ui);
      const Tensor xw = augmenter.weak(xu, rng);
      const Tensor xs = augmenter.strong(xu, rng);
      weak_logits = model.logits(xw, true);
      const Tensor* parts[] = {&xl, &xs};
      joined = concat_rows(parts);
    }

    const Tensor out = model.logits(joined, true);
    const std::size_t c = out.row_size();
    Tensor labeled_logits({b, c}, std::vector<float>(out.data(), out.data() + b * c));
    nn::LossValue ls = supervised_loss(labeled_logits, ly);
    Tensor grad({joined.rows(), c});
    std::copy(ls.grad.data(), ls.grad.data() + b * c, grad.data());
    double lu_value = 0.0, mask_rate = 0.0;
    if (use_unlabeled) {
      Tensor strong_logits({ub, c}, std::vector<float>(out.data() + b * c, out.data() + out.size()));
      UnsupervisedLoss lu = unsupervised_loss(weak_logits, strong_logits, options.tau);
      lu_value = lu.value;
      mask_rate = double(lu.confident) / double(ub);
      const float w = float(options.lambda_u);
      for (std::size_t k = 0; k < ub * c; ++k) grad[b * c + k] = w * lu.grad_strong[k];
    }
    if (!std::isfinite(ls.value) || !std::isfinite(lu_value))
      throw DivergenceError("surrogate loss became non-finite at step " + std::to_string(step));
    optimizer.zero_grad();
    model.backward(grad);
    optimizer.step();
    trace.supervised.push_back(ls.value);
    trace.unsupervised.push_back(lu_value);
    trace.mask_rate.push_back(mask_rate);
  }
  return trace;
}

double surrogate_accuracy(SurrogateModel& model, const Tensor& features,
                          std::span<const Label> labels, std::size_t batch) {
  const std::size_t n = features.rows();
  std::vector<Label> predicted;
  predicted.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(n, begin + batch); ++i) idx.push_back(i);
    const auto p = model.predict(gather_rows(features, idx));
    predicted.insert(predicted.end(), p.begin(), p.end());
  }
  return protocol::accuracy(labels, predicted);
}

}  // namespace vfl::surrogate
