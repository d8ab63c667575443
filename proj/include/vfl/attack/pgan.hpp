#pragma once

#include <span>

#include "vfl/attack/generator.hpp"
#include "vfl/nn/optim.hpp"
#include "vfl/protocol/metrics.hpp"
#include "vfl/surrogate/surrogate.hpp"

namespace vfl::attack {

using nn::Label;

enum class TargetPolicy { kUntargeted, kFixedClass };

struct TargetSpec {
  TargetPolicy policy = TargetPolicy::kUntargeted;
  Label target_class = 0;  // kFixedClass only
};

// Clamps every value into its channel's interval.
void clamp_to_range(Tensor& x, const data::Geometry& geometry, const data::FeatureRange& range);

// x_poi = clamp(x + G(x, z)).
Tensor perturb(PerturbationGenerator& generator, const Tensor& x, const Tensor& noise,
               const data::FeatureRange& range, bool training = false);

// Standard normal noise [n, dim] from a dedicated stream.
Tensor sample_noise(std::size_t n, std::size_t dim, Rng& rng);

// Untargeted: -H(logits, reference) where reference holds the surrogate's
// predictions on the clean inputs. Fixed class: H(logits, c) for every row.
// Gradient is w.r.t. the logits. Throws ValidationError if c is out of range.
nn::LossValue adv_loss_from_logits(const Tensor& poisoned_logits, std::span<const Label> reference,
                                   const TargetSpec& target);
double adv_loss(surrogate::SurrogateModel& target_model, const Tensor& clean, const Tensor& poisoned,
                const TargetSpec& target);

// E[log D(x)] + E[log(1 - D(x_poi))] from discriminator logits, with D
// clamped to [kDiscriminatorEps, 1 - kDiscriminatorEps].
inline constexpr double kDiscriminatorEps = 1e-7;
struct GanLoss {
  double value = 0.0;
  Tensor grad_clean;     // d value / d clean logits
  Tensor grad_poisoned;  // d value / d poisoned logits
};
GanLoss gan_loss_from_logits(const Tensor& clean_logits, const Tensor& poisoned_logits);
double gan_loss(nn::Sequential& discriminator, const Tensor& clean, const Tensor& poisoned);

// Mean absolute perturbation, E[|G(x)|_1] / dim; gradient w.r.t. G(x).
nn::LossValue perturbation_penalty(const Tensor& perturbation);

struct TotalLoss {
  double adv = 0.0;
  double gan = 0.0;
  double penalty = 0.0;
  double total = 0.0;  // adv + lambda_gan * gan + lambda_r * penalty
};

struct PganOptions {
  double lambda_gan = 1.0;
  double lambda_r = 10.0;
  TargetSpec target;
  std::size_t noise_dim = 64;
  std::size_t steps = 1000;
  std::size_t batch = 64;
  std::size_t d_steps = 1;  // discriminator updates per generator update
  std::size_t width = 32;
  nn::AdamOptions generator_adam{2e-4f, 0.5f, 0.999f, 1e-8f};
  nn::AdamOptions discriminator_adam{2e-4f, 0.5f, 0.999f, 1e-8f};
};

struct PganTrace {
  std::vector<double> discriminator;  // L_GAN seen by D
  std::vector<TotalLoss> generator;
};

// Evaluates L_total and its parts on a batch (no parameter updates).
TotalLoss total_loss(PerturbationGenerator& generator, nn::Sequential& discriminator,
                     surrogate::SurrogateModel& target_model, const Tensor& clean,
                     const Tensor& noise, std::span<const Label> reference,
                     const data::FeatureRange& range, const PganOptions& options);

// Same evaluation, additionally accumulating dL_total/dtheta_G into the
// generator's parameter gradients (callers zero them first).
TotalLoss generator_backward(PerturbationGenerator& generator, nn::Sequential& discriminator,
                             surrogate::SurrogateModel& target_model, const Tensor& clean,
                             const Tensor& noise, std::span<const Label> reference,
                             const data::FeatureRange& range, const PganOptions& options);

// Alternating D ascent on L_GAN and G descent on L_total; the surrogate is
// frozen. Throws DivergenceError on non-finite losses.
PganTrace train_pgan(PerturbationGenerator& generator, nn::Sequential& discriminator,
                     surrogate::SurrogateModel& target_model, const Tensor& features,
                     const data::FeatureRange& range, const PganOptions& options,
                     std::uint64_t seed);

// Reporting for the attack objective: metric drop, mean |r| per feature, and
// whether the drop exceeds alpha.
struct ObjectiveReport {
  double f1_drop = 0.0;
  double accuracy_drop = 0.0;
  double mean_perturbation = 0.0;
  bool exceeds_alpha = false;
};
ObjectiveReport attack_objective_check(const protocol::Metrics& clean, const protocol::Metrics& poisoned,
                                       const Tensor& perturbations, double alpha);

}  // namespace vfl::attack
