#pragma once

#include <functional>
#include <map>
#include <span>

#include "vfl/nn/layer.hpp"
#include "vfl/nn/optim.hpp"
#include "vfl/protocol/server.hpp"

namespace vfl::defense {

using nn::Label;

enum class ThresholdRule { kMedianMad, kPercentile };

struct DaeOptions {
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::size_t bottleneck = 16;
  std::size_t epochs = 20;
  std::size_t batch = 128;
  nn::AdamOptions adam{1e-3f, 0.9f, 0.999f, 1e-8f};
  float noise_sigma = 0.1f;  // denoising corruption during training
  bool standardize = true;   // per-coordinate z-scoring from training rows

  ThresholdRule rule = ThresholdRule::kMedianMad;
  double k = 3.0;
  double percentile = 0.99;
  double mad_floor = 1e-6;

  bool per_class = true;
  std::size_t calibration_epoch = 7;
  std::size_t recalibrate_every = 1;  // epochs between refits; 0 = calibrate once
};

struct ClassGroup {
  Label label = 0;
  std::vector<std::size_t> rows;  // positions in the source batch
  Tensor data;
};

// Partition of the batch rows by label, ordered by label.
std::vector<ClassGroup> group_by_label(const Tensor& embeddings, std::span<const Label> labels);

class DaeModel {
 public:
  DaeModel(std::size_t input_dim, const DaeOptions& options, Rng& rng);

  // Reconstruction in the model's (standardized) coordinates.
  Tensor encode_input(const Tensor& rows) const;
  Tensor reconstruct(const Tensor& model_rows);
  std::vector<double> rmse_rows(const Tensor& rows);

  void fit(const Tensor& rows, const DaeOptions& options, std::uint64_t seed);

  nn::Sequential& net() { return net_; }
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<float>& mean() const { return mean_; }
  const std::vector<float>& scale() const { return scale_; }

 private:
  std::size_t input_dim_;
  nn::Sequential net_;
  std::vector<float> mean_;
  std::vector<float> scale_;
};

// sqrt(mean_j (row_j - reconstruction_j)^2), both in the model's coordinates.
double rmse(DaeModel& dae, std::span<const float> row);

struct ThresholdTable {
  std::map<Label, double> theta;
};

// Models keyed by label; in shared mode every label maps to model 0.
struct DaeBank {
  std::vector<DaeModel> models;
  std::map<Label, std::size_t> model_for;

  DaeModel* find(Label label);
};

DaeBank train_dae(const std::vector<ClassGroup>& groups, const DaeOptions& options, std::uint64_t seed);

ThresholdTable calibrate_thresholds(DaeBank& bank, const std::vector<ClassGroup>& groups,
                                    const DaeOptions& options);

struct FilterResult {
  std::vector<std::uint8_t> keep;  // 1 = rmse <= threshold
  std::vector<double> rmse;
  std::vector<double> threshold;
};

// Rows of classes without a model pass through.
FilterResult filter(const Tensor& embeddings, std::span<const Label> labels, DaeBank& bank,
                    const ThresholdTable& thresholds);

struct AnomalyRecord {
  std::size_t epoch = 0;
  std::size_t sample_index = 0;
  Label label = 0;
  double rmse = 0.0;
  double threshold = 0.0;
  bool filtered = false;
};

// Server-side defense: calibrates on a full pass of training embeddings at
// the configured epoch, then screens every round.
class DaeDefense final : public protocol::EmbeddingDefense {
 public:
  DaeDefense(DaeOptions options, std::uint64_t seed);

  bool wants_calibration(std::size_t epoch) const override;
  void calibrate(std::size_t epoch, const Tensor& embeddings, std::span<const Label> labels) override;
  std::vector<std::uint8_t> screen(std::size_t epoch, const Tensor& embeddings,
                                   std::span<const Label> labels,
                                   std::span<const std::size_t> sample_indices) override;

  void set_log(std::function<void(const AnomalyRecord&)> log) { log_ = std::move(log); }
  bool calibrated() const { return calibrated_; }
  const ThresholdTable& thresholds() const { return thresholds_; }
  DaeBank& bank() { return bank_; }

 private:
  DaeOptions options_;
  std::uint64_t seed_;
  DaeBank bank_;
  ThresholdTable thresholds_;
  bool calibrated_ = false;
  std::function<void(const AnomalyRecord&)> log_;
};

}  // namespace vfl::defense
