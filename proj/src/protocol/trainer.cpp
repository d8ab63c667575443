#include "vfl/protocol/trainer.hpp"

#include "vfl/core/error.hpp"

namespace vfl::protocol {
namespace {

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out(end - begin);
  for (std::size_t i = begin; i < end; ++i) out[i - begin] = i;
  return out;
}

BatchTransform gate(BatchTransform inner, std::size_t start_epoch) {
  if (!inner) return nullptr;
  return [inner = std::move(inner), start_epoch](const Tensor& batch,
                                                 std::span<const std::size_t> indices,
                                                 std::size_t epoch) {
    return epoch >= start_epoch ? inner(batch, indices, epoch) : batch;
  };
}

}  // namespace

VflData split_dataset(const data::Dataset& dataset, const std::vector<FeaturePartition>& parts) {
  VflData out;
  for (const FeaturePartition& p : parts) {
    out.train.push_back(p.extract(dataset.train.features));
    out.test.push_back(p.extract(dataset.test.features));
  }
  out.train_labels = dataset.train.labels;
  out.test_labels = dataset.test.labels;
  return out;
}

VflSystem::VflSystem(std::vector<Participant> participants, Server server)
    : participants_(std::move(participants)), server_(std::move(server)) {
  if (participants_.size() != server_.participants())
    throw ConfigError("server expects " + std::to_string(server_.participants()) +
                      " participants, got " + std::to_string(participants_.size()));
  std::size_t malicious = 0;
  for (std::size_t i = 0; i < participants_.size(); ++i) {
    if (participants_[i].id() != i) throw ConfigError("participants must be ordered by id");
    malicious += participants_[i].role() == Role::kMalicious;
  }
  if (malicious > 1) throw ConfigError("at most one malicious participant is supported");
}

Participant* VflSystem::adversary() {
  for (Participant& p : participants_)
    if (p.role() == Role::kMalicious) return &p;
  return nullptr;
}

Tensor VflSystem::forward_round(const BatchRequest& request) {
  BatchRequest eval = request;
  eval.training = false;
  std::vector<EmbeddingUpload> uploads;
  for (Participant& p : participants_) uploads.push_back(p.respond(eval));
  return server_.logits(server_.concatenate(eval, uploads));
}

RoundResult VflSystem::train_step(const BatchRequest& request) {
  std::vector<EmbeddingUpload> uploads;
  uploads.reserve(participants_.size());
  for (Participant& p : participants_) uploads.push_back(p.respond(request));
  RoundResult result = server_.train_round(request, uploads);
  for (std::size_t i = 0; i < participants_.size(); ++i) {
    if (result.kept == 0) participants_[i].skip_round();
    else participants_[i].apply_gradient(result.slices[i]);
  }
  return result;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  Rng rng(derive_seed(seed, "epoch", epoch));
  return rng.permutation(n);
}

EpochRecord VflSystem::run_epoch(std::size_t epoch, std::size_t batch_size, std::uint64_t seed) {
  const std::size_t n = server_.train_labels().size();
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  EmbeddingDefense* defense = server_.defense();
  if (defense && defense->wants_calibration(epoch))
    defense->calibrate(epoch, collect_embeddings(epoch, 4 * batch_size), server_.train_labels());

  const auto order = epoch_order(n, seed, epoch);
  EpochRecord record;
  record.epoch = epoch;
  double loss_sum = 0.0;
  std::size_t kept_sum = 0;
  std::size_t round = 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size, ++round) {
    const std::size_t end = std::min(n, begin + batch_size);
    BatchRequest request{epoch, round, {order.begin() + long(begin), order.begin() + long(end)}, true};
    const RoundResult r = train_step(request);
    loss_sum += r.loss * double(r.kept);
    kept_sum += r.kept;
    record.rows_dropped += (end - begin) - r.kept;
  }
  record.train_loss = kept_sum ? loss_sum / double(kept_sum) : 0.0;
  return record;
}

Tensor VflSystem::collect_embeddings(std::size_t epoch, std::size_t batch_size) {
  const std::size_t n = server_.train_labels().size();
  std::vector<Tensor> chunks;
  for (std::size_t begin = 0, round = 0; begin < n; begin += batch_size, ++round) {
    BatchRequest request{epoch, round, range(begin, std::min(n, begin + batch_size)), false};
    std::vector<EmbeddingUpload> uploads;
    for (Participant& p : participants_) uploads.push_back(p.respond(request));
    chunks.push_back(server_.concatenate(request, uploads));
  }
  std::vector<const Tensor*> parts;
  for (const Tensor& c : chunks) parts.push_back(&c);
  return concat_rows(parts);
}

Metrics VflSystem::evaluate(const std::vector<Tensor>& local_test, std::span<const Label> labels,
                            std::size_t batch_size) {
  if (local_test.size() != participants_.size())
    throw ConfigError("test data must have one slice per participant");
  const std::size_t n = labels.size();
  std::vector<Label> predicted;
  predicted.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const auto idx = range(begin, std::min(n, begin + batch_size));
    std::vector<Tensor> embeddings;
    for (std::size_t i = 0; i < participants_.size(); ++i)
      embeddings.push_back(participants_[i].embed(gather_rows(local_test[i], idx)));
    std::vector<const Tensor*> parts;
    for (const Tensor& e : embeddings) parts.push_back(&e);
    const auto batch_pred = nn::argmax_rows(server_.logits(concat_columns(parts)));
    predicted.insert(predicted.end(), batch_pred.begin(), batch_pred.end());
  }
  return score(labels, predicted);
}

TrainResult train_vfl(VflSystem& system, const VflData& data, const TrainingConfig& config,
                      std::size_t first_epoch, const EpochCallback& on_epoch) {
  Participant* adversary = system.adversary();
  if (config.attack) {
    if (!adversary) throw ConfigError("attack requested but no participant is malicious");
    adversary->clear_transforms();
    if (config.attack->features)
      adversary->set_feature_transform(gate(config.attack->features, config.attack->start_epoch));
    if (config.attack->embeddings)
      adversary->set_embedding_transform(gate(config.attack->embeddings, config.attack->start_epoch));
  }
  system.server().set_defense(config.defense);

  TrainResult result;
  for (std::size_t epoch = first_epoch; epoch <= config.epochs; ++epoch) {
    if (adversary && config.freeze_adversary_bottom && config.attack)
      adversary->set_frozen(epoch >= config.attack->start_epoch);
    EpochRecord record = system.run_epoch(epoch, config.batch_size, config.seed);
    record.test = system.evaluate(data.test, data.test_labels, config.eval_batch);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record, system);
  }
  if (!result.history.empty()) result.final = result.history.back().test;
  if (adversary) {
    adversary->clear_transforms();
    adversary->set_frozen(false);
  }
  system.server().set_defense(nullptr);
  return result;
}

}  // namespace vfl::protocol
