#pragma once

#include <span>
#include <vector>

#include "vfl/data/augment.hpp"
#include "vfl/nn/layer.hpp"
#include "vfl/nn/loss.hpp"
#include "vfl/nn/optim.hpp"

namespace vfl::surrogate {

using nn::Label;

// The adversary's stand-in for the server: a copy of its bottom model with
// a classification layer appended.
class SurrogateModel {
 public:
  SurrogateModel(nn::Sequential backbone, std::size_t embedding_dim, std::size_t n_classes, Rng& rng);

  Tensor embed(const Tensor& x, bool training) { return backbone_.forward(x, training); }
  Tensor logits(const Tensor& x, bool training);
  // Gradient w.r.t. the input of the most recent logits() call.
  Tensor backward(const Tensor& grad_logits);
  Tensor probabilities(const Tensor& x) { return nn::softmax_rows(logits(x, false)); }
  std::vector<Label> predict(const Tensor& x) { return nn::argmax_rows(logits(x, false)); }

  std::vector<nn::Parameter*> parameters();
  nn::Sequential& backbone() { return backbone_; }
  nn::Sequential& head() { return head_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t embedding_dim() const { return embedding_dim_; }

 private:
  nn::Sequential backbone_;
  nn::Sequential head_;
  std::size_t embedding_dim_;
  std::size_t n_classes_;
};

// `probe` is one sample of local features used to measure the snapshot's
// embedding width. A nonzero `expected_embedding_dim` that disagrees with
// it is a ConfigError, as is n_classes < 2.
SurrogateModel init_surrogate(const nn::Sequential& bottom_snapshot, const Tensor& probe,
                              std::size_t n_classes, std::uint64_t seed,
                              std::size_t expected_embedding_dim = 0);

// Known-label oracle: k distinct training indices drawn with the seed, and
// their true labels.
struct LabeledIndices {
  std::vector<std::size_t> indices;
  std::vector<Label> labels;
};
LabeledIndices reveal_known_labels(std::span<const Label> truth, std::size_t k, std::uint64_t seed);

// L_s: mean cross entropy of the (weakly augmented) labeled logits.
nn::LossValue supervised_loss(const Tensor& logits, std::span<const Label> labels);

// L_u: pseudo-labels from the weak view, cross entropy on the strong view,
// gated by max prob > tau, averaged over all unlabeled rows. The gradient is
// w.r.t. the strong logits only; the weak view is treated as a constant.
struct UnsupervisedLoss {
  double value = 0.0;
  Tensor grad_strong;
  std::size_t confident = 0;
};
UnsupervisedLoss unsupervised_loss(const Tensor& weak_logits, const Tensor& strong_logits, double tau);

struct FixMatchOptions {
  double tau = 0.95;
  std::size_t mu = 7;
  std::size_t batch = 16;
  double lambda_u = 1.0;
  std::size_t steps = 1024;
  nn::SgdOptions sgd{0.03f, 0.9f, 5e-4f};
};

struct SurrogateTrace {
  std::vector<double> supervised;
  std::vector<double> unsupervised;
  std::vector<double> mask_rate;
};

// FixMatch fine-tuning on the adversary's local features. `labeled` indexes
// rows of `features`; every other row is unlabeled. Throws ValidationError
// when `labeled` is empty.
SurrogateTrace train_surrogate(SurrogateModel& model, const Tensor& features,
                               const LabeledIndices& labeled, const data::Augmenter& augmenter,
                               const FixMatchOptions& options, std::uint64_t seed);

double surrogate_accuracy(SurrogateModel& model, const Tensor& features,
                          std::span<const Label> labels, std::size_t batch = 2048);

}  // namespace vfl::surrogate
