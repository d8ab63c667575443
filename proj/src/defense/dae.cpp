#include "vfl/defense/dae.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "vfl/core/error.hpp"
#include "vfl/nn/loss.hpp"
#include "vfl/nn/models.hpp"

namespace vfl::defense {
namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + long(mid), v.end());
  const double hi = v[mid];
  if (n % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + long(mid)));
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::vector<ClassGroup> group_by_label(const Tensor& embeddings, std::span<const Label> labels) {
  if (embeddings.rows() != labels.size()) throw ValidationError("one label per embedding row required");
  std::map<Label, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);
  std::vector<ClassGroup> groups;
  for (auto& [label, idx] : rows) {
    ClassGroup g{label, std::move(idx), {}};
    g.data = gather_rows(embeddings, g.rows);
    groups.push_back(std::move(g));
  }
  return groups;
}

DaeModel::DaeModel(std::size_t input_dim, const DaeOptions& options, Rng& rng)
    : input_dim_(input_dim),
      net_(nn::make_dae(input_dim, options.hidden1, options.hidden2, options.bottleneck, rng)),
      mean_(input_dim, 0.0f),
      scale_(input_dim, 1.0f) {}

Tensor DaeModel::encode_input(const Tensor& rows) const {
  if (rows.row_size() != input_dim_ && rows.rows() > 0)
    throw ValidationError("DAE expects rows of width " + std::to_string(input_dim_));
  Tensor out = rows;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < input_dim_; ++j) row[j] = (row[j] - mean_[j]) / scale_[j];
  }
  return out;
}

Tensor DaeModel::reconstruct(const Tensor& model_rows) { return net_.forward(model_rows, false); }

std::vector<double> DaeModel::rmse_rows(const Tensor& rows) {
  const Tensor x = encode_input(rows);
  const Tensor y = reconstruct(x);
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < input_dim_; ++j) {
      const double d = double(x.at(r, j)) - y.at(r, j);
      s += d * d;
    }
    out[r] = std::sqrt(s / double(input_dim_));
  }
  return out;
}

void DaeModel::fit(const Tensor& rows, const DaeOptions& options, std::uint64_t seed) {
  const std::size_t n = rows.rows();
  if (n == 0) throw ValidationError("cannot fit a DAE on zero rows");
  if (options.standardize) {
    for (std::size_t j = 0; j < input_dim_; ++j) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        s += rows.at(r, j);
        s2 += double(rows.at(r, j)) * rows.at(r, j);
      }
      const double m = s / double(n);
      mean_[j] = float(m);
      scale_[j] = float(std::max(std::sqrt(std::max(s2 / double(n) - m * m, 0.0)), 1e-3));
    }
  }
  const Tensor x = encode_input(rows);
  nn::Adam optimizer(net_.parameters(), options.adam);
  Rng rng(seed);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    for (std::size_t begin = 0; begin < n; begin += options.batch) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(options.batch, n - begin));
      const Tensor clean = gather_rows(x, idx);
      Tensor noisy = clean;
      if (options.noise_sigma > 0)
        for (float& v : noisy.values()) v += options.noise_sigma * float(rng.normal());
      const Tensor out = net_.forward(noisy, true);
      const nn::LossValue loss = nn::mean_squared_error(out, clean);
      if (!std::isfinite(loss.value)) throw DivergenceError("DAE reconstruction loss is not finite");
      optimizer.zero_grad();
      net_.backward(loss.grad);
      optimizer.step();
    }
  }
}

double rmse(DaeModel& dae, std::span<const float> row) {
  Tensor t({1, row.size()}, std::vector<float>(row.begin(), row.end()));
  return dae.rmse_rows(t)[0];
}

DaeModel* DaeBank::find(Label label) {
  auto it = model_for.find(label);
  return it == model_for.end() ? nullptr : &models[it->second];
}

DaeBank train_dae(const std::vector<ClassGroup>& groups, const DaeOptions& options, std::uint64_t seed) {
  DaeBank bank;
  if (groups.empty()) return bank;
  const std::size_t dim = groups.front().data.row_size();
  if (options.per_class) {
    for (const ClassGroup& g : groups) {
      if (g.rows.empty()) continue;
      if (g.rows.size() < options.bottleneck)
        std::cerr << "warning: class " << g.label << " has only " << g.rows.size()
                  << " rows for a " << options.bottleneck << "-dim bottleneck\n";
      Rng init(derive_seed(seed, "dae_init", std::uint64_t(g.label)));
      DaeModel model(dim, options, init);
      model.fit(g.data, options, derive_seed(seed, "dae_fit", std::uint64_t(g.label)));
      bank.model_for[g.label] = bank.models.size();
      bank.models.push_back(std::move(model));
    }
  } else {
    std::vector<const Tensor*> parts;
    for (const ClassGroup& g : groups) parts.push_back(&g.data);
    Rng init(derive_seed(seed, "dae_init"));
    DaeModel model(dim, options, init);
    model.fit(concat_rows(parts), options, derive_seed(seed, "dae_fit"));
    bank.models.push_back(std::move(model));
    for (const ClassGroup& g : groups) bank.model_for[g.label] = 0;
  }
  return bank;
}

ThresholdTable calibrate_thresholds(DaeBank& bank, const std::vector<ClassGroup>& groups,
                                    const DaeOptions& options) {
  ThresholdTable table;
  for (const ClassGroup& g : groups) {
    DaeModel* model = bank.find(g.label);
    if (!model || g.rows.empty()) continue;
    const std::vector<double> errors = model->rmse_rows(g.data);
    double theta;
    if (options.rule == ThresholdRule::kPercentile) {
      theta = quantile(errors, options.percentile);
    } else {
      const double med = median(errors);
      std::vector<double> dev(errors.size());
      for (std::size_t i = 0; i < errors.size(); ++i) dev[i] = std::abs(errors[i] - med);
      const double mad = median(dev);
      theta = med + options.k * std::max(mad, options.mad_floor);
    }
    // Thresholds must be positive even for perfectly reconstructed classes.
    table.theta[g.label] = std::max(theta, options.mad_floor);
  }
  return table;
}

FilterResult filter(const Tensor& embeddings, std::span<const Label> labels, DaeBank& bank,
                    const ThresholdTable& thresholds) {
  const std::size_t n = labels.size();
  FilterResult out{std::vector<std::uint8_t>(n, 1), std::vector<double>(n, 0.0),
                   std::vector<double>(n, std::numeric_limits<double>::infinity())};
  for (const ClassGroup& g : group_by_label(embeddings, labels)) {
    DaeModel* model = bank.find(g.label);
    auto theta = thresholds.theta.find(g.label);
    if (!model || theta == thresholds.theta.end()) continue;
    const auto errors = model->rmse_rows(g.data);
    for (std::size_t j = 0; j < g.rows.size(); ++j) {
      const std::size_t r = g.rows[j];
      out.rmse[r] = errors[j];
      out.threshold[r] = theta->second;
      out.keep[r] = errors[j] <= theta->second;
    }
  }
  return out;
}

DaeDefense::DaeDefense(DaeOptions options, std::uint64_t seed) : options_(options), seed_(seed) {}

bool DaeDefense::wants_calibration(std::size_t epoch) const {
  if (epoch == options_.calibration_epoch) return true;
  return options_.recalibrate_every > 0 && epoch > options_.calibration_epoch &&
         (epoch - options_.calibration_epoch) % options_.recalibrate_every == 0;
}

void DaeDefense::calibrate(std::size_t epoch, const Tensor& embeddings, std::span<const Label> labels) {
  const auto groups = group_by_label(embeddings, labels);
  bank_ = train_dae(groups, options_, derive_seed(seed_, "dae", epoch));
  thresholds_ = calibrate_thresholds(bank_, groups, options_);
  calibrated_ = true;
}

std::vector<std::uint8_t> DaeDefense::screen(std::size_t epoch, const Tensor& embeddings,
                                             std::span<const Label> labels,
                                             std::span<const std::size_t> sample_indices) {
  if (!calibrated_) return std::vector<std::uint8_t>(labels.size(), 1);
  FilterResult result = filter(embeddings, labels, bank_, thresholds_);
  if (log_)
    for (std::size_t i = 0; i < labels.size(); ++i)
      log_({epoch, sample_indices[i], labels[i], result.rmse[i], result.threshold[i], !result.keep[i]});
  return result.keep;
}

}  // namespace vfl::defense
