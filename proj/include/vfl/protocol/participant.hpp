#pragma once

#include <functional>
#include <memory>
#include <span>

#include "vfl/nn/layer.hpp"
#include "vfl/nn/optim.hpp"
#include "vfl/protocol/messages.hpp"
#include "vfl/protocol/partition.hpp"

namespace vfl::protocol {

enum class Role { kHonest, kMalicious };

// Rewrites a malicious participant's local feature batch or its embedding
// batch before upload. Arguments: batch, sample indices, epoch.
using BatchTransform =
    std::function<Tensor(const Tensor&, std::span<const std::size_t>, std::size_t)>;

class Participant {
 public:
  Participant(FeaturePartition partition, nn::Sequential bottom, Role role, nn::SgdOptions sgd);

  std::size_t id() const { return partition_.participant_id; }
  Role role() const { return role_; }
  const FeaturePartition& partition() const { return partition_; }
  std::size_t embedding_dim() const { return embedding_dim_; }

  // Local training slice [N, local features]; only this party's columns.
  void set_training_features(Tensor local);
  const Tensor& training_features() const { return train_; }

  // Malicious participants only (ProtocolError otherwise).
  void set_feature_transform(BatchTransform transform);
  void set_embedding_transform(BatchTransform transform);
  void clear_transforms();

  // Frozen participants still embed but ignore returned gradients.
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  EmbeddingUpload respond(const BatchRequest& request);
  void apply_gradient(const GradientSlice& slice);
  // Ends a round in which the server kept no rows: no gradient, no step.
  void skip_round() { pending_.clear(); }

  // Evaluation-mode embedding of arbitrary local features (no transforms).
  Tensor embed(const Tensor& local_features);

  nn::Sequential& bottom() { return bottom_; }
  nn::Optimizer& optimizer() { return *optimizer_; }
  const std::vector<AccessRecord>& access_log() const { return log_; }
  void set_audit(bool enabled) { audit_ = enabled; }

 private:
  void record(std::string what, std::size_t owner, std::size_t epoch);

  FeaturePartition partition_;
  nn::Sequential bottom_;
  Role role_;
  std::unique_ptr<nn::Optimizer> optimizer_;
  std::size_t embedding_dim_ = 0;
  Tensor train_;
  BatchTransform feature_transform_;
  BatchTransform embedding_transform_;
  bool frozen_ = false;
  bool audit_ = false;
  std::vector<AccessRecord> log_;
  std::vector<std::size_t> pending_;  // indices of the last training upload
  std::size_t pending_epoch_ = 0;
};

}  // namespace vfl::protocol
