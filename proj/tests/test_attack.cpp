#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "toy_system.hpp"
#include "vfl/attack/pgan.hpp"
#include "vfl/attack/poison.hpp"
#include "vfl/core/error.hpp"
#include "vfl/nn/gradcheck.hpp"

using namespace vfl;
using namespace vfl::attack;

namespace {

const data::Geometry kTiny{data::Layout::kImage, 1, 6, 6};
const data::FeatureRange kUnit{{0.0f}, {1.0f}};

double log_sig(double z) { return -std::log1p(std::exp(-z)); }

double nll(std::span<const float> z, Label y) {
  double m = z[0], s = 0;
  for (float v : z) m = std::max(m, double(v));
  for (float v : z) s += std::exp(double(v) - m);
  return -(double(z[std::size_t(y)]) - m - std::log(s));
}

// Tiny generator, discriminator and surrogate over 6x6 single-channel images.
struct Rig {
  Rng rng{17};
  PerturbationGenerator g{kTiny, 3, 0.1f, rng, 2};
  nn::Sequential d = make_discriminator(kTiny, rng, 2);
  surrogate::SurrogateModel target{nn::make_fcnn(36, 8, 5, 3, rng), 5, 4, rng};
  Tensor x = test::uniform_tensor({5, 1, 6, 6}, 2, 0.3f, 0.7f);
  Tensor z = test::random_tensor({5, 3}, 3);
};

}  // namespace

TEST_CASE("perturbation preserves shape and respects the range") {
  Rig rig;
  const Tensor p = perturb(rig.g, rig.x, rig.z, kUnit);
  CHECK(p.shape() == rig.x.shape());

  PerturbationGenerator loud(kTiny, 3, 5.0f, rig.rng, 2);
  const Tensor q = perturb(loud, rig.x, rig.z, kUnit);
  for (float v : q.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  const data::Geometry tab{data::Layout::kTabular, 1, 1, 7};
  PerturbationGenerator dense(tab, 4, 0.2f, rig.rng, 3);
  const Tensor xt = test::uniform_tensor({3, 7}, 4);
  CHECK(dense.forward(xt, test::random_tensor({3, 4}, 5), false).shape() == Shape{3, 7});
  CHECK_THROWS_AS(dense.forward(xt, Tensor({3, 2}), false), ValidationError);
}

TEST_CASE("zero generator output and clamping") {
  Rig rig;
  PerturbationGenerator silent(kTiny, 3, 0.0f, rig.rng, 2);
  const Tensor same = perturb(silent, rig.x, rig.z, kUnit);
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i] == rig.x[i]);

  Tensor top({2, 1, 6, 6});
  top.fill(1.0f);
  Tensor pushed = top;
  for (float& v : pushed.values()) v += 0.4f;
  clamp_to_range(pushed, kTiny, kUnit);
  for (float v : pushed.values()) CHECK(v == 1.0f);

  const data::Geometry rgb{data::Layout::kImage, 3, 1, 2};
  const data::FeatureRange per{{-1.0f, 0.0f, -2.0f}, {1.0f, 0.5f, 2.0f}};
  Tensor c({1, 3, 1, 2}, {-3, 3, -3, 3, -3, 3});
  clamp_to_range(c, rgb, per);
  CHECK(std::vector<float>(c.values().begin(), c.values().end()) == std::vector<float>{-1, 1, 0, 0.5f, -2, 2});
}

TEST_CASE("penalty equals mean absolute perturbation") {
  Rig rig;
  const Tensor r = rig.g.forward(rig.x, rig.z, false);
  double oracle = 0;
  for (float v : r.values()) oracle += std::fabs(v);
  oracle /= double(r.size());
  CHECK(test::relative_difference(perturbation_penalty(r).value, oracle) < 1e-6);
  const Tensor poisoned = perturb(rig.g, rig.x, rig.z, kUnit);
  double diff = 0;
  for (std::size_t i = 0; i < r.size(); ++i) diff += std::fabs(double(poisoned[i]) - rig.x[i]);
  CHECK(test::relative_difference(diff / double(r.size()), oracle) < 1e-6);
  CHECK(perturbation_penalty(Tensor({2, 3})).value == 0.0);
}

TEST_CASE("adversarial loss oracles") {
  const Tensor logits = test::random_tensor({4, 3}, 8, 2.0f);
  const std::vector<Label> ref{0, 2, 1, 1};
  double h = 0;
  for (std::size_t i = 0; i < 4; ++i) h += nll(logits.row(i), ref[i]);
  h /= 4;
  const auto untargeted = adv_loss_from_logits(logits, ref, {});
  CHECK(test::relative_difference(untargeted.value, -h) < 1e-6);

  const TargetSpec fixed{TargetPolicy::kFixedClass, 2};
  double hc = 0;
  for (std::size_t i = 0; i < 4; ++i) hc += nll(logits.row(i), 2);
  CHECK(test::relative_difference(adv_loss_from_logits(logits, ref, fixed).value, hc / 4) < 1e-6);

  Tensor sure({2, 3});
  sure.row(0)[2] = 70.0f;
  sure.row(1)[2] = 70.0f;
  CHECK(adv_loss_from_logits(sure, {}, fixed).value == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(adv_loss_from_logits(sure, {}, TargetSpec{TargetPolicy::kFixedClass, 3}), ValidationError);
  CHECK_THROWS_AS(adv_loss_from_logits(sure, {}, TargetSpec{TargetPolicy::kFixedClass, -1}), ValidationError);

  // Zero perturbation keeps the clean prediction, where the untargeted loss
  // is as low as any input the surrogate labels the same way.
  Rig rig;
  CHECK(adv_loss(rig.target, rig.x, rig.x, {}) < 0);
}

TEST_CASE("GAN loss oracles") {
  const Tensor half({6, 1});
  CHECK(gan_loss_from_logits(half, half).value == doctest::Approx(2 * std::log(0.5)).epsilon(1e-9));

  Tensor sure_clean({3, 1}), sure_fake({3, 1});
  sure_clean.fill(40.0f);
  sure_fake.fill(-40.0f);
  const double near = gan_loss_from_logits(sure_clean, sure_fake).value;
  CHECK(near < 0);
  CHECK(near > -1e-5);

  const Tensor a = test::random_tensor({5, 1}, 1, 2.0f), b = test::random_tensor({4, 1}, 2, 2.0f);
  double oracle = 0;
  for (float v : a.values()) oracle += log_sig(v) / 5;
  for (float v : b.values()) oracle += std::log(1 - std::exp(log_sig(v))) / 4;
  const GanLoss gl = gan_loss_from_logits(a, b);
  CHECK(test::relative_difference(gl.value, oracle) < 1e-6);
  // d/dz log sigmoid(z) = 1 - sigmoid(z); d/dz log(1 - sigmoid(z)) = -sigmoid(z).
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(gl.grad_clean[i] == doctest::Approx((1 - 1 / (1 + std::exp(-a[i]))) / 5).epsilon(1e-5));
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(gl.grad_poisoned[j] == doctest::Approx(-(1 / (1 + std::exp(-b[j]))) / 4).epsilon(1e-5));

  Rig rig;
  const Tensor p = perturb(rig.g, rig.x, rig.z, kUnit);
  const double direct = gan_loss(rig.d, rig.x, p);
  CHECK(direct < 0);
  for (float v : rig.d.forward(rig.x, false).values()) CHECK(std::isfinite(v));
}

TEST_CASE("total loss decomposes into its terms") {
  Rig rig;
  PganOptions options;
  options.lambda_gan = 0.7;
  options.lambda_r = 3.0;
  const std::vector<Label> ref = rig.target.predict(rig.x);
  const TotalLoss t = total_loss(rig.g, rig.d, rig.target, rig.x, rig.z, ref, kUnit, options);
  const Tensor p = perturb(rig.g, rig.x, rig.z, kUnit);
  const double adv = adv_loss(rig.target, rig.x, p, options.target);
  const double gan = gan_loss(rig.d, rig.x, p);
  const double pen = perturbation_penalty(rig.g.forward(rig.x, rig.z, false)).value;
  CHECK(test::relative_difference(t.adv, adv) < 1e-6);
  CHECK(test::relative_difference(t.gan, gan) < 1e-6);
  CHECK(test::relative_difference(t.penalty, pen) < 1e-6);
  CHECK(test::relative_difference(t.total, adv + 0.7 * gan + 3.0 * pen) < 1e-6);
}

TEST_CASE("generator gradients pass a finite-difference check") {
  for (TargetSpec target : {TargetSpec{}, TargetSpec{TargetPolicy::kFixedClass, 1}}) {
    // Unit tanh scale inside a range that never clamps keeps the gradients
    // well above float rounding.
    Rig rig;
    Rng rng(23);
    rig.g = PerturbationGenerator(kTiny, 3, 1.0f, rng, 2);
    const data::FeatureRange wide{{-5.0f}, {5.0f}};
    PganOptions options;
    options.lambda_gan = 0.5;
    options.lambda_r = 2.0;
    options.target = target;
    const std::vector<Label> ref = rig.target.predict(rig.x);
    auto loss = [&] { return total_loss(rig.g, rig.d, rig.target, rig.x, rig.z, ref, wide, options).total; };
    auto backward = [&] {
      (void)generator_backward(rig.g, rig.d, rig.target, rig.x, rig.z, ref, wide, options);
    };
    Rng pick(4);
    const auto r = nn::check_gradients(rig.g.parameters(), loss, backward, 3e-3, 8, pick);
    INFO("error " << r.relative_error << " skipped " << r.skipped << " of " << r.checked + r.skipped);
    CHECK(r.relative_error < 1e-4);
    CHECK(r.skipped * 4 <= r.checked);
  }
}

TEST_CASE("poison counts and sets") {
  CHECK(poison_count(100, 0.2) == 20);
  CHECK(poison_count(60000, 0.2) == 12000);
  CHECK(poison_count(7, 0.5) == 3);
  CHECK(poison_count(10, 0.0) == 0);
  CHECK(poison_count(10, 1.0) == 10);
  CHECK_THROWS_AS(poison_count(10, 1.5), ValidationError);
  CHECK_THROWS_AS(poison_count(10, -0.1), ValidationError);

  const auto small = select_poison_set(500, 0.04, 9);
  const auto large = select_poison_set(500, 0.2, 9);
  CHECK(small.size() == 20);
  CHECK(large.size() == 100);
  CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
  CHECK(select_poison_set(500, 0.2, 9) == large);
  CHECK(select_poison_set(500, 0.2, 10) != large);
}

TEST_CASE("poison_batch replaces exactly the masked rows") {
  Rig rig;
  const Tensor batch = test::uniform_tensor({100, 1, 6, 6}, 6, 0.2f, 0.8f);
  for (double rho : {0.0, 0.2, 1.0}) {
    const PoisonedBatch out = poison_batch(rig.g, batch, rho, kUnit, 5);
    std::size_t marked = 0;
    for (std::size_t r = 0; r < 100; ++r) {
      marked += out.mask[r];
      bool changed = false;
      for (std::size_t i = 0; i < 36; ++i) changed |= out.features.row(r)[i] != batch.row(r)[i];
      CHECK(changed == bool(out.mask[r]));
    }
    CHECK(marked == poison_count(100, rho));
  }
}

TEST_CASE("poison table substitution") {
  Rig rig;
  const Tensor features = test::uniform_tensor({20, 1, 6, 6}, 7, 0.2f, 0.8f);
  auto table = std::make_shared<PoisonTable>(
      build_pgan_table(rig.g, features, select_poison_set(20, 0.25, 1), kUnit, 3));
  CHECK(table->size() == 5);
  const auto transform = replace_rows(table);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Tensor out = transform(gather_rows(features, idx), idx, 6);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = out.row(r);
    if (table->contains(idx[r])) {
      const auto want = table->row_for(idx[r]);
      CHECK(std::equal(row.begin(), row.end(), want.begin()));
    } else {
      const auto clean = features.row(idx[r]);
      CHECK(std::equal(row.begin(), row.end(), clean.begin()));
    }
  }
  const double m = mean_perturbation(*table, features);
  CHECK(m > 0);
  CHECK(m < 0.1 + 1e-6);
  CHECK_THROWS_AS(PoisonTable(4, {5}, Tensor({1, 36})), ValidationError);
}

TEST_CASE("zero poison fraction reproduces the clean run") {
  const test::Toy toy = test::make_toy();
  protocol::TrainingConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.seed = 4;
  protocol::VflSystem clean = test::make_toy_system(toy, 3, true);
  const auto base = protocol::train_vfl(clean, toy.data, config);

  protocol::VflSystem attacked = test::make_toy_system(toy, 3, true);
  Rng rng(1);
  PerturbationGenerator g(toy.parts[0].local_geometry(), 2, 1.0f, rng, 2);
  auto table = std::make_shared<PoisonTable>(
      build_pgan_table(g, toy.data.train[0], select_poison_set(96, 0.0, 1), toy.dataset.range, 1));
  config.attack = protocol::AttackHooks{2, replace_rows(table), nullptr};
  const auto poisoned = protocol::train_vfl(attacked, toy.data, config);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(poisoned.history[e].train_loss == base.history[e].train_loss);
    CHECK(poisoned.history[e].test.f1 == base.history[e].test.f1);
  }
}

TEST_CASE("P-GAN training") {
  const data::Geometry tab{data::Layout::kTabular, 1, 1, 6};
  const test::Toy toy = test::make_toy(300, 12, 3, 4);
  const Tensor& x = toy.data.train[0];
  Rng rng(5);
  surrogate::SurrogateModel target = surrogate::init_surrogate(nn::make_fcnn(6, 16, 8, 3, rng),
                                                               Tensor({1, 6}), 3, 1);
  surrogate::FixMatchOptions fm;
  fm.steps = 200;
  fm.lambda_u = 0.0;
  fm.sgd.lr = 0.05f;
  surrogate::train_surrogate(target, x, surrogate::reveal_known_labels(toy.data.train_labels, 150, 1),
                             data::Augmenter(tab, toy.dataset.range), fm, 2);

  auto run = [&](double lambda_r, std::size_t steps) {
    Rng r(8);
    PerturbationGenerator g(tab, 4, 0.5f, r, 8);
    nn::Sequential d = make_discriminator(tab, r, 8);
    PganOptions o;
    o.lambda_r = lambda_r;
    o.steps = steps;
    o.noise_dim = 4;
    o.generator_adam.lr = 1e-2f;
    o.discriminator_adam.lr = 1e-2f;
    const PganTrace trace = train_pgan(g, d, target, x, toy.dataset.range, o, 3);
    CHECK(trace.generator.size() == steps);
    CHECK(trace.discriminator.size() == steps);
    for (const TotalLoss& t : trace.generator) CHECK(std::isfinite(t.total));
    Rng nr(2);
    const Tensor noise = sample_noise(x.rows(), 4, nr);
    return std::pair{perturbation_penalty(g.forward(x, noise, false)).value,
                     surrogate_accuracy(target, perturb(g, x, noise, toy.dataset.range),
                                        target.predict(x))};
  };
  const auto [free_mag, free_agree] = run(0.0, 150);
  const auto [tight_mag, tight_agree] = run(1e4, 150);
  CHECK(tight_mag < 0.01);
  CHECK(free_mag > tight_mag);
  // Unconstrained perturbations flip many surrogate decisions.
  CHECK(free_agree < 0.8);
  CHECK(tight_agree > free_agree);

  PganOptions bad;
  bad.lambda_r = -1;
  Rng r(1);
  PerturbationGenerator g(tab, 4, 0.5f, r, 8);
  nn::Sequential d = make_discriminator(tab, r, 8);
  CHECK_THROWS_AS(train_pgan(g, d, target, x, toy.dataset.range, bad, 1), ValidationError);
}

TEST_CASE("attack objective report") {
  const Tensor r({2, 2}, {0.1f, -0.1f, 0.3f, -0.3f});
  const ObjectiveReport rep = attack_objective_check({0.97, 0.98}, {0.80, 0.82}, r, 0.1);
  CHECK(rep.f1_drop == doctest::Approx(0.17));
  CHECK(rep.accuracy_drop == doctest::Approx(0.16));
  CHECK(rep.mean_perturbation == doctest::Approx(0.2));
  CHECK(rep.exceeds_alpha);
  CHECK_FALSE(attack_objective_check({0.97, 0.98}, {0.95, 0.96}, r, 0.1).exceeds_alpha);
}
