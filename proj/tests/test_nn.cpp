#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vfl/core/error.hpp"
#include "vfl/nn/gradcheck.hpp"
#include "vfl/nn/layers.hpp"
#include "vfl/nn/loss.hpp"
#include "vfl/nn/models.hpp"
#include "vfl/nn/optim.hpp"

using namespace vfl;
using namespace vfl::nn;

namespace {

// L = sum(weights * f(x)); dL/df = weights.
GradCheckResult check_layer(Layer& layer, const Tensor& x, std::uint64_t seed, double step = 1e-2,
                            std::size_t per_parameter = 12, bool training = true) {
  const Tensor probe = layer.forward(x, training);
  const Tensor w = test::random_tensor(probe.shape(), seed, 0.5f);
  auto loss = [&] {
    const Tensor y = layer.forward(x, training);
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) total += double(y[i]) * w[i];
    return total;
  };
  auto backward = [&] {
    layer.forward(x, training);
    layer.backward(w);
  };
  Rng rng(seed + 1);
  return check_gradients(layer.parameters(), loss, backward, step, per_parameter, rng);
}

// Input gradient of the same objective against central differences.
double input_gradient_error(Layer& layer, Tensor x, std::uint64_t seed, double step = 1e-2) {
  const Tensor w = test::random_tensor(layer.forward(x, true).shape(), seed, 0.5f);
  layer.forward(x, true);
  const Tensor g = layer.backward(w);
  auto loss = [&] {
    const Tensor y = layer.forward(x, true);
    double total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) total += double(y[i]) * w[i];
    return total;
  };
  double d2 = 0, n2 = 0;
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 40)) {
    const float orig = x[i];
    auto at = [&](double o) {
      x[i] = float(orig + o);
      return loss();
    };
    auto stencil = [&](double h) { return (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h); };
    const double numeric = stencil(step), half = stencil(step / 2);
    x[i] = orig;
    if (std::abs(numeric - half) > 1e-3 * std::max(std::abs(numeric), std::abs(half)) + 1e-5) continue;
    d2 += (numeric - g[i]) * (numeric - g[i]);
    n2 += numeric * numeric;
  }
  return std::sqrt(d2 / std::max(n2, 1e-30));
}

// Most probes must be usable, and those must agree.
bool passes(const GradCheckResult& r) {
  return r.relative_error < 1e-4 && r.checked > 0 && r.skipped * 4 <= r.checked + r.skipped;
}

}  // namespace

TEST_CASE("finite-difference gradient checks on tiny layers") {
  Rng rng(3);
  SUBCASE("dense") {
    Dense layer(6, 4, rng);
    CHECK(passes(check_layer(layer, test::random_tensor({5, 6}, 1), 10)));
    CHECK(input_gradient_error(layer, test::random_tensor({5, 6}, 1), 11) < 1e-4);
  }
  SUBCASE("fcnn3") {
    Sequential net = make_fcnn(8, 7, 3, 3, rng);
    CHECK(passes(check_layer(net, test::random_tensor({4, 8}, 2), 12)));
  }
  SUBCASE("conv2d with stride and padding") {
    Conv2d layer(2, 3, ConvGeometry{3, 2, 1}, rng);
    const Tensor x = test::random_tensor({2, 2, 7, 6}, 3);
    CHECK(passes(check_layer(layer, x, 13, 1e-2, 0)));
    CHECK(input_gradient_error(layer, x, 14) < 1e-4);
  }
  SUBCASE("transposed convolution with output padding") {
    ConvTranspose2d layer(3, 2, ConvGeometry{3, 2, 1}, 1, 0, rng);
    const Tensor x = test::random_tensor({2, 3, 4, 3}, 4);
    CHECK(layer.forward(x, true).shape() == Shape{2, 2, 8, 5});
    CHECK(passes(check_layer(layer, x, 15, 1e-2, 0)));
    CHECK(input_gradient_error(layer, x, 16) < 1e-4);
  }
  SUBCASE("batch norm in training mode") {
    BatchNorm layer(3);
    const Tensor x = test::random_tensor({6, 3, 2, 2}, 5);
    CHECK(passes(check_layer(layer, x, 17, 1e-2, 0)));
    CHECK(input_gradient_error(layer, x, 18) < 1e-4);
  }
  SUBCASE("residual block with projection shortcut") {
    ResidualBlock block(2, 4, 2, rng);
    const Tensor x = test::random_tensor({4, 2, 6, 6}, 6);
    const GradCheckResult r = check_layer(block, x, 19, 3e-3, 0);
    INFO("error " << r.relative_error << " checked " << r.checked << " skipped " << r.skipped);
    CHECK(passes(r));
  }
  SUBCASE("smooth activations") {
    Sequential net;
    net.add(std::make_unique<Dense>(5, 6, rng)).add(std::make_unique<Sigmoid>());
    net.add(std::make_unique<Dense>(6, 6, rng)).add(std::make_unique<Tanh>());
    net.add(std::make_unique<Dense>(6, 2, rng)).add(std::make_unique<LeakyReLU>(0.2f));
    CHECK(passes(check_layer(net, test::random_tensor({4, 5}, 7), 20)));
    CHECK(input_gradient_error(net, test::random_tensor({4, 5}, 7), 21, 3e-2) < 1e-4);
  }
}

TEST_CASE("cross entropy matches a scalar oracle") {
  const Tensor logits = test::random_tensor({5, 4}, 30, 2.0f);
  const std::vector<Label> labels{0, 3, 1, 1, 2};
  const LossValue ce = cross_entropy(logits, labels);
  double ref = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(double(logits.at(r, c)));
    ref += std::log(z) - logits.at(r, std::size_t(labels[r]));
  }
  ref /= 5;
  CHECK(ce.value == doctest::Approx(ref).epsilon(1e-6));
  const Tensor p = softmax_rows(logits);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(ce.grad.at(r, c) ==
            doctest::Approx((p.at(r, c) - (int(c) == labels[r] ? 1.0 : 0.0)) / 5).epsilon(1e-5));

  SUBCASE("weights and normalizer") {
    const std::vector<float> w{1, 0, 1, 0, 1};
    const LossValue part = cross_entropy(logits, labels, w, 3.0);
    const auto rows = cross_entropy_rows(logits, labels);
    CHECK(part.value == doctest::Approx((rows[0] + rows[2] + rows[4]) / 3).epsilon(1e-6));
    for (std::size_t c = 0; c < 4; ++c) CHECK(part.grad.at(1, c) == 0.0f);
  }
  SUBCASE("uniform logits over ten classes give ln 10") {
    const Tensor flat({3, 10}, 0.25f);
    CHECK(cross_entropy(flat, std::vector<Label>{0, 5, 9}).value == doctest::Approx(std::log(10.0)).epsilon(1e-7));
  }
}

TEST_CASE("mean squared error and log-sigmoid") {
  const Tensor a = test::random_tensor({3, 4}, 31), b = test::random_tensor({3, 4}, 32);
  const LossValue mse = mean_squared_error(a, b);
  double ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  CHECK(mse.value == doctest::Approx(ref / 12).epsilon(1e-6));
  CHECK(mse.grad[5] == doctest::Approx(2 * (a[5] - b[5]) / 12.0).epsilon(1e-5));
  for (double z : {-800.0, -3.0, 0.0, 2.5, 800.0}) {
    const double ref_ls = z < 0 ? z - std::log1p(std::exp(z)) : -std::log1p(std::exp(-z));
    CHECK(log_sigmoid(z) == doctest::Approx(ref_ls).epsilon(1e-12));
  }
  CHECK(log_sigmoid(0.0) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("optimizers follow their update rules") {
  Parameter p("w", Tensor({3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
  p.grad = Tensor({3}, std::vector<float>{0.1f, -0.3f, 2.0f});
  SUBCASE("momentum sgd") {
    MomentumSgd opt({&p}, SgdOptions{0.1f, 0.9f, 0.01f});
    opt.step();
    opt.step();
    // v1 = g + wd w0; w1 = w0 - lr v1; v2 = 0.9 v1 + g + wd w1; w2 = w1 - lr v2
    const double w0 = 1.0, g = 0.1;
    const double v1 = g + 0.01 * w0, w1 = w0 - 0.1 * v1;
    const double v2 = 0.9 * v1 + g + 0.01 * w1, w2 = w1 - 0.1 * v2;
    CHECK(p.value[0] == doctest::Approx(w2).epsilon(1e-6));
  }
  SUBCASE("adam") {
    Adam opt({&p}, AdamOptions{0.01f, 0.9f, 0.999f, 1e-8f});
    opt.step();
    // First step moves each weight by lr * sign(g).
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-5));
    CHECK(p.value[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-5));
  }
}

TEST_CASE("model builders") {
  Rng rng(40);
  Sequential fc = make_fcnn(392, 256, 64, 3, rng);
  CHECK(fc.forward(Tensor({2, 1, 14, 28}), false).shape() == Shape{2, 64});
  CHECK(make_fcnn(128, 256, 100, 4, rng).size() == 7);
  Sequential res = make_resnet18(3, 4, 16, rng);
  CHECK(res.forward(test::random_tensor({2, 3, 16, 32}, 41), false).shape() == Shape{2, 16});
  Sequential dae = make_dae(20, 8, 6, 3, rng);
  CHECK(dae.forward(Tensor({5, 20}), false).shape() == Shape{5, 20});
  CHECK_THROWS_AS(make_fcnn(4, 4, 4, 1, rng), ConfigError);
}
