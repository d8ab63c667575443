#include "vfl/protocol/server.hpp"

#include <cmath>
#include <numeric>

#include "vfl/core/error.hpp"

namespace vfl::protocol {

Server::Server(nn::Sequential top, std::vector<std::size_t> embedding_dims,
               std::vector<Label> train_labels, nn::SgdOptions sgd)
    : top_(std::move(top)), dims_(std::move(embedding_dims)), labels_(std::move(train_labels)) {
  input_dim_ = std::accumulate(dims_.begin(), dims_.end(), std::size_t{0});
  try {
    nn::Sequential probe = top_;
    (void)probe.forward(Tensor({1, input_dim_}), false);
  } catch (const std::exception& e) {
    throw ConfigError("top model does not accept the " + std::to_string(input_dim_) +
                      "-wide concatenated embedding: " + e.what());
  }
  optimizer_ = std::make_unique<nn::MomentumSgd>(top_.parameters(), sgd);
}

Tensor Server::concatenate(const BatchRequest& request,
                           const std::vector<EmbeddingUpload>& uploads) const {
  if (uploads.size() != dims_.size())
    throw ProtocolError("expected " + std::to_string(dims_.size()) + " uploads, got " +
                        std::to_string(uploads.size()));
  std::vector<const Tensor*> parts;
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    const EmbeddingUpload& u = uploads[i];
    if (u.participant_id != i) throw ProtocolError("uploads are not in participant order");
    if (u.sample_indices != request.sample_indices)
      throw ProtocolError("participant " + std::to_string(i) + " answered for different samples");
    if (u.embedding.rows() != request.sample_indices.size() || u.embedding.row_size() != dims_[i])
      throw ConfigError("participant " + std::to_string(i) + " uploaded " +
                        shape_string(u.embedding.shape()) + ", top model expects width " +
                        std::to_string(dims_[i]));
    parts.push_back(&u.embedding);
  }
  return concat_columns(parts);
}

std::vector<Label> Server::labels_for(std::span<const std::size_t> indices) const {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= labels_.size()) throw ProtocolError("sample index " + std::to_string(i) + " has no label");
    out.push_back(labels_[i]);
  }
  return out;
}

RoundResult Server::train_round(const BatchRequest& request,
                                const std::vector<EmbeddingUpload>& uploads) {
  const Tensor joined = concatenate(request, uploads);
  const std::vector<Label> labels = labels_for(request.sample_indices);
  const std::size_t n = labels.size();

  std::vector<float> weights(n, 1.0f);
  std::size_t kept = n;
  if (defense_) {
    const auto keep = defense_->screen(request.epoch, joined, labels, request.sample_indices);
    if (keep.size() != n) throw ProtocolError("defense mask length does not match the batch");
    kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] = keep[i] ? 1.0f : 0.0f;
      kept += keep[i] != 0;
    }
  }

  RoundResult result;
  result.kept = kept;
  Tensor grad_joined({n, input_dim_});
  if (kept > 0) {
    const Tensor out = top_.forward(joined, true);
    nn::LossValue loss = nn::cross_entropy(out, labels, weights, double(kept));
    if (!std::isfinite(loss.value)) throw DivergenceError("top-model loss is not finite");
    result.loss = loss.value;
    optimizer_->zero_grad();
    grad_joined = top_.backward(loss.grad);
    optimizer_->step();
  }

  std::size_t offset = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    result.slices.push_back({i, request.sample_indices, slice_columns(grad_joined, offset, dims_[i])});
    offset += dims_[i];
  }
  return result;
}

Tensor Server::logits(const Tensor& concatenated) { return top_.forward(concatenated, false); }

}  // namespace vfl::protocol
