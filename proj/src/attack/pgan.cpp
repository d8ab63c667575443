#include "vfl/attack/pgan.hpp"

#include <algorithm>
#include <cmath>

#include "vfl/core/error.hpp"

namespace vfl::attack {
namespace {

// log(p) for p = sigmoid(z) clamped to [eps, 1 - eps]; derivative w.r.t. z.
std::pair<double, double> clamped_log_sigmoid(double z) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  if (p < kDiscriminatorEps) return {std::log(kDiscriminatorEps), 0.0};
  if (p > 1.0 - kDiscriminatorEps) return {std::log1p(-kDiscriminatorEps), 0.0};
  return {nn::log_sigmoid(z), 1.0 - p};
}

struct Forward {
  Tensor perturbation;
  Tensor poisoned;
  std::vector<std::uint8_t> inside;  // x + G(x) strictly inside the range
};

Forward forward_poison(PerturbationGenerator& generator, const Tensor& clean, const Tensor& noise,
                       const data::FeatureRange& range, bool training) {
  Forward f;
  f.perturbation = generator.forward(clean, noise, training);
  f.poisoned = clean;
  const data::Geometry& g = generator.geometry();
  const std::size_t plane = g.features() / g.channels;
  f.inside.assign(clean.size(), 1);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const std::size_t ch = (i / plane) % g.channels;
    const float v = clean[i] + f.perturbation[i];
    const float lo = range.lo[ch], hi = range.hi[ch];
    if (v <= lo || v >= hi) f.inside[i] = 0;
    f.poisoned[i] = std::clamp(v, lo, hi);
  }
  return f;
}

void check_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v))
    throw DivergenceError(std::string(what) + " became non-finite at step " + std::to_string(step));
}

}  // namespace

void clamp_to_range(Tensor& x, const data::Geometry& geometry, const data::FeatureRange& range) {
  const std::size_t plane = geometry.features() / geometry.channels;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = (i / plane) % geometry.channels;
    x[i] = std::clamp(x[i], range.lo[ch], range.hi[ch]);
  }
}

Tensor perturb(PerturbationGenerator& generator, const Tensor& x, const Tensor& noise,
               const data::FeatureRange& range, bool training) {
  return forward_poison(generator, x, noise, range, training).poisoned;
}

Tensor sample_noise(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor z({n, dim});
  for (float& v : z.values()) v = float(rng.normal());
  return z;
}

nn::LossValue adv_loss_from_logits(const Tensor& poisoned_logits, std::span<const Label> reference,
                                   const TargetSpec& target) {
  const std::size_t n = poisoned_logits.rows(), c = poisoned_logits.row_size();
  if (target.policy == TargetPolicy::kFixedClass) {
    if (target.target_class < 0 || std::size_t(target.target_class) >= c)
      throw ValidationError("target class " + std::to_string(target.target_class) + " out of range");
    const std::vector<Label> wanted(n, target.target_class);
    return nn::cross_entropy(poisoned_logits, wanted);
  }
  nn::LossValue ce = nn::cross_entropy(poisoned_logits, reference);
  ce.value = -ce.value;
  for (float& g : ce.grad.values()) g = -g;
  return ce;
}

double adv_loss(surrogate::SurrogateModel& target_model, const Tensor& clean, const Tensor& poisoned,
                const TargetSpec& target) {
  const auto reference = target_model.predict(clean);
  return adv_loss_from_logits(target_model.logits(poisoned, false), reference, target).value;
}

GanLoss gan_loss_from_logits(const Tensor& clean_logits, const Tensor& poisoned_logits) {
  GanLoss out;
  out.grad_clean = Tensor(clean_logits.shape());
  out.grad_poisoned = Tensor(poisoned_logits.shape());
  const std::size_t n = clean_logits.size(), m = poisoned_logits.size();
  double real = 0.0, fake = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [v, d] = clamped_log_sigmoid(clean_logits[i]);
    real += v;
    out.grad_clean[i] = float(d / double(n));
  }
  for (std::size_t j = 0; j < m; ++j) {
    // log(1 - sigmoid(b)) = log sigmoid(-b)
    const auto [v, d] = clamped_log_sigmoid(-double(poisoned_logits[j]));
    fake += v;
    out.grad_poisoned[j] = float(-d / double(m));
  }
  out.value = (n ? real / double(n) : 0.0) + (m ? fake / double(m) : 0.0);
  return out;
}

double gan_loss(nn::Sequential& discriminator, const Tensor& clean, const Tensor& poisoned) {
  const Tensor a = discriminator.forward(clean, false);
  const Tensor b = discriminator.forward(poisoned, false);
  return gan_loss_from_logits(a, b).value;
}

nn::LossValue perturbation_penalty(const Tensor& perturbation) {
  nn::LossValue out;
  out.grad = Tensor(perturbation.shape());
  if (perturbation.empty()) return out;
  const double scale = 1.0 / double(perturbation.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < perturbation.size(); ++i) {
    const float v = perturbation[i];
    sum += std::abs(double(v));
    out.grad[i] = float(v > 0 ? scale : v < 0 ? -scale : 0.0);
  }
  out.value = sum * scale;
  return out;
}

TotalLoss total_loss(PerturbationGenerator& generator, nn::Sequential& discriminator,
                     surrogate::SurrogateModel& target_model, const Tensor& clean,
                     const Tensor& noise, std::span<const Label> reference,
                     const data::FeatureRange& range, const PganOptions& options) {
  const Forward f = forward_poison(generator, clean, noise, range, false);
  TotalLoss t;
  t.adv = adv_loss_from_logits(target_model.logits(f.poisoned, false), reference, options.target).value;
  t.gan = gan_loss_from_logits(discriminator.forward(clean, false),
                               discriminator.forward(f.poisoned, false)).value;
  t.penalty = perturbation_penalty(f.perturbation).value;
  t.total = t.adv + options.lambda_gan * t.gan + options.lambda_r * t.penalty;
  return t;
}

TotalLoss generator_backward(PerturbationGenerator& generator, nn::Sequential& discriminator,
                             surrogate::SurrogateModel& target_model, const Tensor& clean,
                             const Tensor& noise, std::span<const Label> reference,
                             const data::FeatureRange& range, const PganOptions& options) {
  // The discriminator's clean term does not depend on G, so only its value
  // is needed.
  const Tensor clean_d = discriminator.forward(clean, false);
  const Forward f = forward_poison(generator, clean, noise, range, true);

  const nn::LossValue adv =
      adv_loss_from_logits(target_model.logits(f.poisoned, false), reference, options.target);
  Tensor grad_poisoned = target_model.backward(adv.grad);

  const GanLoss gan = gan_loss_from_logits(clean_d, discriminator.forward(f.poisoned, false));
  Tensor grad_d = gan.grad_poisoned;
  for (float& g : grad_d.values()) g *= float(options.lambda_gan);
  const Tensor grad_from_d = discriminator.backward(grad_d);

  const nn::LossValue pen = perturbation_penalty(f.perturbation);
  Tensor grad_g(f.perturbation.shape());
  for (std::size_t i = 0; i < grad_g.size(); ++i) {
    const float through = f.inside[i] ? grad_poisoned[i] + grad_from_d[i] : 0.0f;
    grad_g[i] = through + float(options.lambda_r) * pen.grad[i];
  }
  generator.backward(grad_g);

  TotalLoss t;
  t.adv = adv.value;
  t.gan = gan.value;
  t.penalty = pen.value;
  t.total = t.adv + options.lambda_gan * t.gan + options.lambda_r * t.penalty;
  return t;
}

PganTrace train_pgan(PerturbationGenerator& generator, nn::Sequential& discriminator,
                     surrogate::SurrogateModel& target_model, const Tensor& features,
                     const data::FeatureRange& range, const PganOptions& options,
                     std::uint64_t seed) {
  const std::size_t n = features.rows();
  if (n == 0) throw ValidationError("P-GAN training needs local features");
  if (options.lambda_gan < 0 || options.lambda_r < 0)
    throw ValidationError("loss weights must be nonnegative");
  auto g_params = generator.parameters();
  auto d_params = discriminator.parameters();
  nn::Adam g_opt(g_params, options.generator_adam);
  nn::Adam d_opt(d_params, options.discriminator_adam);

  // The surrogate is frozen, so its clean predictions are fixed.
  std::vector<Label> reference;
  if (options.target.policy == TargetPolicy::kUntargeted) {
    reference.reserve(n);
    for (std::size_t begin = 0; begin < n; begin += 4096) {
      std::vector<std::size_t> idx;
      for (std::size_t i = begin; i < std::min(n, begin + 4096); ++i) idx.push_back(i);
      const auto p = target_model.predict(gather_rows(features, idx));
      reference.insert(reference.end(), p.begin(), p.end());
    }
  }

  Rng rng(derive_seed(seed, "pgan"));
  PganTrace trace;
  const std::size_t b = std::min(options.batch, n);
  auto draw = [&](std::vector<Label>& ref) {
    std::vector<std::size_t> idx(b);
    for (auto& i : idx) i = rng.below(n);
    ref.clear();
    if (!reference.empty())
      for (std::size_t i : idx) ref.push_back(reference[i]);
    return gather_rows(features, idx);
  };

  std::vector<Label> ref;
  for (std::size_t step = 0; step < options.steps; ++step) {
    for (std::size_t k = 0; k < options.d_steps; ++k) {
      const Tensor x = draw(ref);
      const Tensor z = sample_noise(b, generator.noise_dim(), rng);
      const Tensor poisoned = perturb(generator, x, z, range, true);
      const Tensor* parts[] = {&x, &poisoned};
      const Tensor logits = discriminator.forward(concat_rows(parts), true);
      const Tensor clean_logits({b, 1}, std::vector<float>(logits.data(), logits.data() + b));
      const Tensor poison_logits({b, 1}, std::vector<float>(logits.data() + b, logits.data() + 2 * b));
      const GanLoss gan = gan_loss_from_logits(clean_logits, poison_logits);
      check_finite(gan.value, "discriminator loss", step);
      // Ascent on L_GAN: descend on its negation.
      Tensor grad({2 * b, 1});
      for (std::size_t i = 0; i < b; ++i) {
        grad[i] = -gan.grad_clean[i];
        grad[b + i] = -gan.grad_poisoned[i];
      }
      d_opt.zero_grad();
      discriminator.backward(grad);
      d_opt.step();
      trace.discriminator.push_back(gan.value);
    }

    const Tensor x = draw(ref);
    const Tensor z = sample_noise(b, generator.noise_dim(), rng);
    g_opt.zero_grad();
    const TotalLoss t = generator_backward(generator, discriminator, target_model, x, z, ref, range, options);
    check_finite(t.total, "generator loss", step);
    g_opt.step();
    trace.generator.push_back(t);
  }
  return trace;
}

ObjectiveReport attack_objective_check(const protocol::Metrics& clean, const protocol::Metrics& poisoned,
                                       const Tensor& perturbations, double alpha) {
  ObjectiveReport r;
  r.f1_drop = clean.f1 - poisoned.f1;
  r.accuracy_drop = clean.accuracy - poisoned.accuracy;
  r.mean_perturbation = perturbation_penalty(perturbations).value;
  r.exceeds_alpha = r.f1_drop > alpha;
  return r;
}

}  // namespace vfl::attack
