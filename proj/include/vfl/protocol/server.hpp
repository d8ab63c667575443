#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "vfl/nn/layer.hpp"
#include "vfl/nn/optim.hpp"
#include "vfl/protocol/messages.hpp"
#include "vfl/protocol/metrics.hpp"

namespace vfl::protocol {

// Server-side screen applied to concatenated embeddings before the loss.
class EmbeddingDefense {
 public:
  virtual ~EmbeddingDefense() = default;

  // Whether the trainer should hand over a full pass of training embeddings
  // at the start of `epoch`.
  virtual bool wants_calibration(std::size_t epoch) const = 0;
  virtual void calibrate(std::size_t epoch, const Tensor& embeddings,
                         std::span<const Label> labels) = 0;

  // One entry per row: 1 keeps the row in the loss, 0 drops it.
  virtual std::vector<std::uint8_t> screen(std::size_t epoch, const Tensor& embeddings,
                                           std::span<const Label> labels,
                                           std::span<const std::size_t> sample_indices) = 0;
};

struct RoundResult {
  double loss = 0.0;      // mean over kept rows
  std::size_t kept = 0;
  std::vector<GradientSlice> slices;
};

class Server {
 public:
  // `embedding_dims` lists d_i in participant order; the top model must
  // accept sum(d_i) inputs (ConfigError otherwise).
  Server(nn::Sequential top, std::vector<std::size_t> embedding_dims,
         std::vector<Label> train_labels, nn::SgdOptions sgd);

  std::size_t participants() const { return dims_.size(); }
  std::size_t input_dim() const { return input_dim_; }

  void set_defense(EmbeddingDefense* defense) { defense_ = defense; }
  EmbeddingDefense* defense() const { return defense_; }

  // Validates alignment and widths, then concatenates in participant order.
  Tensor concatenate(const BatchRequest& request, const std::vector<EmbeddingUpload>& uploads) const;

  RoundResult train_round(const BatchRequest& request, const std::vector<EmbeddingUpload>& uploads);

  Tensor logits(const Tensor& concatenated);

  const std::vector<Label>& train_labels() const { return labels_; }
  std::vector<Label> labels_for(std::span<const std::size_t> indices) const;

  nn::Sequential& top() { return top_; }
  nn::Optimizer& optimizer() { return *optimizer_; }

 private:
  nn::Sequential top_;
  std::vector<std::size_t> dims_;
  std::size_t input_dim_ = 0;
  std::vector<Label> labels_;
  std::unique_ptr<nn::Optimizer> optimizer_;
  EmbeddingDefense* defense_ = nullptr;
};

}  // namespace vfl::protocol
