#pragma once

#include <functional>
#include <optional>

#include "vfl/protocol/participant.hpp"
#include "vfl/protocol/server.hpp"

namespace vfl::protocol {

// Per-participant local slices of a partitioned dataset, in participant order.
struct VflData {
  std::vector<Tensor> train;
  std::vector<Label> train_labels;
  std::vector<Tensor> test;
  std::vector<Label> test_labels;
};

VflData split_dataset(const data::Dataset& dataset, const std::vector<FeaturePartition>& parts);

// Transforms the malicious participant applies from `start_epoch` on.
struct AttackHooks {
  std::size_t start_epoch = 1;
  BatchTransform features;
  BatchTransform embeddings;
};

struct TrainingConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::size_t eval_batch = 2048;
  std::uint64_t seed = 0;
  std::optional<AttackHooks> attack;
  EmbeddingDefense* defense = nullptr;
  bool freeze_adversary_bottom = false;  // during attack epochs
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::size_t rows_dropped = 0;
  Metrics test;
};

struct TrainResult {
  Metrics final;
  std::vector<EpochRecord> history;
};

class VflSystem {
 public:
  VflSystem(std::vector<Participant> participants, Server server);

  std::vector<Participant>& participants() { return participants_; }
  Participant& participant(std::size_t i) { return participants_.at(i); }
  Server& server() { return server_; }
  // The malicious participant, or nullptr.
  Participant* adversary();

  // Logits for a batch (evaluation mode, transforms applied).
  Tensor forward_round(const BatchRequest& request);
  // One protocol round: uploads, server loss and update, gradient return.
  RoundResult train_step(const BatchRequest& request);

  // One pass over the training set in the seed-determined order for `epoch`.
  EpochRecord run_epoch(std::size_t epoch, std::size_t batch_size, std::uint64_t seed);

  // Concatenated embeddings of every training sample, as uploaded in `epoch`.
  Tensor collect_embeddings(std::size_t epoch, std::size_t batch_size);

  Metrics evaluate(const std::vector<Tensor>& local_test, std::span<const Label> labels,
                   std::size_t batch_size);

 private:
  std::vector<Participant> participants_;
  Server server_;
};

// Deterministic sample order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

using EpochCallback = std::function<void(const EpochRecord&, VflSystem&)>;

// Runs epochs [first_epoch, config.epochs], evaluating on the clean test
// split after each. Throws ConfigError when an attack is requested without a
// malicious participant.
TrainResult train_vfl(VflSystem& system, const VflData& data, const TrainingConfig& config,
                      std::size_t first_epoch = 1, const EpochCallback& on_epoch = {});

}  // namespace vfl::protocol
