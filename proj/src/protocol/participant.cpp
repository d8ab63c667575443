#include "vfl/protocol/participant.hpp"

#include "vfl/core/error.hpp"
#include "vfl/nn/layers.hpp"

namespace vfl::protocol {
namespace {

std::size_t output_width(nn::Sequential& net, const FeaturePartition& partition) {
  Shape probe{1};
  const Geometry g = partition.local_geometry();
  if (g.is_image()) probe.insert(probe.end(), {g.channels, g.height, g.width});
  else probe.push_back(g.features());
  nn::Sequential copy = net;
  return copy.forward(Tensor(probe), false).row_size();
}

}  // namespace

Participant::Participant(FeaturePartition partition, nn::Sequential bottom, Role role,
                         nn::SgdOptions sgd)
    : partition_(std::move(partition)), bottom_(std::move(bottom)), role_(role) {
  optimizer_ = std::make_unique<nn::MomentumSgd>(bottom_.parameters(), sgd);
  embedding_dim_ = output_width(bottom_, partition_);
}

void Participant::set_training_features(Tensor local) {
  if (local.rows() > 0 && local.row_size() != partition_.feature_dims())
    throw ValidationError("participant " + std::to_string(id()) + " expects " +
                          std::to_string(partition_.feature_dims()) + " local features");
  train_ = std::move(local);
}

void Participant::set_feature_transform(BatchTransform transform) {
  if (role_ != Role::kMalicious)
    throw ProtocolError("honest participant " + std::to_string(id()) + " cannot alter its inputs");
  feature_transform_ = std::move(transform);
}

void Participant::set_embedding_transform(BatchTransform transform) {
  if (role_ != Role::kMalicious)
    throw ProtocolError("honest participant " + std::to_string(id()) + " cannot alter its embeddings");
  embedding_transform_ = std::move(transform);
}

void Participant::clear_transforms() {
  feature_transform_ = nullptr;
  embedding_transform_ = nullptr;
}

void Participant::record(std::string what, std::size_t owner, std::size_t epoch) {
  if (audit_) log_.push_back({std::move(what), owner, epoch});
}

EmbeddingUpload Participant::respond(const BatchRequest& request) {
  for (std::size_t i : request.sample_indices)
    if (i >= train_.rows()) throw ProtocolError("sample index " + std::to_string(i) + " out of range");
  record("features", id(), request.epoch);
  Tensor x = gather_rows(train_, request.sample_indices);
  if (feature_transform_) x = feature_transform_(x, request.sample_indices, request.epoch);
  Tensor e = bottom_.forward(x, request.training);
  if (embedding_transform_) e = embedding_transform_(e, request.sample_indices, request.epoch);
  if (request.training) {
    pending_ = request.sample_indices;
    pending_epoch_ = request.epoch;
  }
  return {id(), request.sample_indices, std::move(e)};
}

void Participant::apply_gradient(const GradientSlice& slice) {
  if (slice.participant_id != id())
    throw ProtocolError("gradient addressed to participant " + std::to_string(slice.participant_id) +
                        " delivered to " + std::to_string(id()));
  if (slice.sample_indices != pending_)
    throw ProtocolError("gradient indices do not match the last upload");
  if (slice.grad.rows() != pending_.size() || slice.grad.row_size() != embedding_dim_)
    throw ProtocolError("gradient slice has shape " + shape_string(slice.grad.shape()) +
                        ", expected [" + std::to_string(pending_.size()) + ", " +
                        std::to_string(embedding_dim_) + "]");
  record("gradient", id(), pending_epoch_);
  pending_.clear();
  if (frozen_) return;
  optimizer_->zero_grad();
  bottom_.backward(slice.grad);
  optimizer_->step();
}

Tensor Participant::embed(const Tensor& local_features) {
  return bottom_.forward(local_features, false);
}

}  // namespace vfl::protocol
