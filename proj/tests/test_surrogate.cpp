#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "toy_system.hpp"
#include "vfl/core/error.hpp"
#include "vfl/nn/gradcheck.hpp"
#include "vfl/nn/layers.hpp"
#include "vfl/surrogate/surrogate.hpp"

using namespace vfl;
using namespace vfl::surrogate;

namespace {

// -log softmax(z)[y], straight from the definition.
double nll(std::span<const float> z, Label y) {
  double m = z[0];
  for (float v : z) m = std::max(m, double(v));
  double s = 0;
  for (float v : z) s += std::exp(double(v) - m);
  return -(double(z[std::size_t(y)]) - m - std::log(s));
}

double unsupervised_oracle(const Tensor& weak, const Tensor& strong, double tau) {
  double total = 0;
  for (std::size_t i = 0; i < weak.rows(); ++i) {
    const auto w = weak.row(i);
    double m = w[0], s = 0;
    for (float v : w) m = std::max(m, double(v));
    for (float v : w) s += std::exp(double(v) - m);
    std::size_t best = 0;
    for (std::size_t k = 1; k < w.size(); ++k)
      if (w[k] > w[best]) best = k;
    const double qmax = 1.0 / s;  // exp(m - m) / s
    if (qmax > tau) total += nll(strong.row(i), Label(best));
  }
  return total / double(weak.rows());
}

data::Augmenter tabular_augmenter(const data::Dataset& ds) {
  return data::Augmenter(data::Geometry{data::Layout::kTabular, 1, 1, ds.geometry.features() / 2},
                         ds.range);
}

}  // namespace

TEST_CASE("supervised loss matches its oracle and analytic cases") {
  Tensor sure({3, 4});
  const std::vector<Label> labels{2, 0, 3};
  for (std::size_t i = 0; i < 3; ++i) sure.row(i)[std::size_t(labels[i])] = 60.0f;
  CHECK(supervised_loss(sure, labels).value == doctest::Approx(0.0).epsilon(1e-9));

  const Tensor uniform({5, 10});
  CHECK(supervised_loss(uniform, std::vector<Label>{0, 1, 2, 3, 9}).value ==
        doctest::Approx(std::log(10.0)).epsilon(1e-6));

  const Tensor z = test::random_tensor({6, 5}, 3, 2.0f);
  const std::vector<Label> y{4, 0, 1, 1, 3, 2};
  double oracle = 0;
  for (std::size_t i = 0; i < 6; ++i) oracle += nll(z.row(i), y[i]);
  oracle /= 6;
  const auto ls = supervised_loss(z, y);
  CHECK(test::relative_difference(ls.value, oracle) < 1e-6);
  CHECK(ls.value >= 0);
  CHECK_THROWS_AS(supervised_loss(Tensor({0, 5}), std::vector<Label>{}), ValidationError);
}

TEST_CASE("unsupervised loss gating") {
  SUBCASE("nothing above the threshold contributes nothing") {
    const Tensor weak({4, 3});  // uniform: max q = 1/3
    const Tensor strong = test::random_tensor({4, 3}, 1);
    const UnsupervisedLoss lu = unsupervised_loss(weak, strong, 0.5);
    CHECK(lu.value == 0.0);
    CHECK(lu.confident == 0);
    for (float g : lu.grad_strong.values()) CHECK(g == 0.0f);
  }
  SUBCASE("a certain and agreeing strong view contributes zero") {
    Tensor weak({1, 3}), strong({1, 3});
    weak.row(0)[1] = 80.0f;
    strong.row(0)[1] = 80.0f;
    const UnsupervisedLoss lu = unsupervised_loss(weak, strong, 0.95);
    CHECK(lu.confident == 1);
    CHECK(lu.value == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("gated rows have zero gradient and the rest match the oracle") {
    Tensor weak = test::random_tensor({8, 4}, 5, 3.0f);
    const Tensor strong = test::random_tensor({8, 4}, 6, 2.0f);
    const double tau = 0.7;
    const UnsupervisedLoss lu = unsupervised_loss(weak, strong, tau);
    CHECK(test::relative_difference(lu.value, unsupervised_oracle(weak, strong, tau)) < 1e-6);
    CHECK(lu.confident > 0);
    CHECK(lu.confident < 8);
    CHECK(lu.value >= 0);
    const Tensor q = nn::softmax_rows(weak);
    for (std::size_t i = 0; i < 8; ++i) {
      const auto row = q.row(i);
      const bool gated = *std::max_element(row.begin(), row.end()) <= tau;
      double mass = 0;
      for (float g : lu.grad_strong.row(i)) mass += std::fabs(g);
      CHECK((gated ? mass == 0.0 : mass > 0.0));
    }
  }
}

TEST_CASE("surrogate initialization copies the snapshot") {
  Rng rng(2);
  const nn::Sequential bottom = nn::make_fcnn(6, 8, 5, 3, rng);
  const Tensor x = test::random_tensor({3, 6}, 7);
  SurrogateModel model = init_surrogate(bottom, Tensor({1, 6}), 10, 4);
  nn::Sequential reference = bottom;
  const Tensor a = model.embed(x, false), b = reference.forward(x, false);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(model.logits(x, false).shape() == Shape{3, 10});
  const Tensor p = model.probabilities(x);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (float v : p.row(i)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
  CHECK_THROWS_AS(init_surrogate(bottom, Tensor({1, 6}), 10, 4, 7), ConfigError);
  CHECK_THROWS_AS(init_surrogate(bottom, Tensor({1, 6}), 1, 4), ConfigError);
}

TEST_CASE("known labels are nested across quantities") {
  std::vector<Label> truth(500);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = Label(i % 7);
  const auto small = reveal_known_labels(truth, 10, 3);
  const auto large = reveal_known_labels(truth, 320, 3);
  CHECK(small.indices.size() == 10);
  for (std::size_t i : small.indices)
    CHECK(std::find(large.indices.begin(), large.indices.end(), i) != large.indices.end());
  for (std::size_t j = 0; j < large.indices.size(); ++j) CHECK(large.labels[j] == truth[large.indices[j]]);
  CHECK(std::adjacent_find(large.indices.begin(), large.indices.end()) == large.indices.end());
  CHECK_THROWS_AS(reveal_known_labels(truth, 501, 3), ValidationError);
}

TEST_CASE("combined FixMatch objective passes a gradient check") {
  Rng rng(9);
  nn::Sequential backbone;
  backbone.add(std::make_unique<nn::Dense>(5, 6, rng)).add(std::make_unique<nn::Tanh>());
  backbone.add(std::make_unique<nn::Dense>(6, 4, rng));
  SurrogateModel model(std::move(backbone), 4, 3, rng);
  const Tensor xl = test::random_tensor({4, 5}, 1);
  const std::vector<Label> yl{0, 2, 1, 2};
  const Tensor xw = test::random_tensor({6, 5}, 2, 2.0f);
  Tensor xs = xw;
  for (float& v : xs.values()) v += 0.3f;
  const double lambda = 0.7;

  // Put tau in the widest gap between weak-view confidences so that no probe
  // flips the gate or a confident pseudo-label.
  const Tensor q = nn::softmax_rows(model.logits(xw, false));
  std::vector<double> qmax, margin;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<float> row(q.row(i).begin(), q.row(i).end());
    std::sort(row.rbegin(), row.rend());
    qmax.push_back(row[0]);
    margin.push_back(row[0] - row[1]);
  }
  std::vector<double> sorted = qmax;
  std::sort(sorted.begin(), sorted.end());
  std::size_t gap = 0;
  for (std::size_t i = 1; i + 1 < sorted.size(); ++i)
    if (sorted[i + 1] - sorted[i] > sorted[gap + 1] - sorted[gap]) gap = i;
  const double tau = (sorted[gap] + sorted[gap + 1]) / 2;
  REQUIRE(sorted[gap + 1] - sorted[gap] > 0.02);
  for (std::size_t i = 0; i < qmax.size(); ++i)
    if (qmax[i] > tau) REQUIRE(margin[i] > 0.02);

  const UnsupervisedLoss probe = unsupervised_loss(model.logits(xw, false), model.logits(xs, false), tau);
  CHECK(probe.confident > 0);

  auto loss = [&] {
    const double ls = supervised_loss(model.logits(xl, true), yl).value;
    const Tensor weak = model.logits(xw, true);
    return ls + lambda * unsupervised_loss(weak, model.logits(xs, true), tau).value;
  };
  auto backward = [&] {
    const auto ls = supervised_loss(model.logits(xl, true), yl);
    model.backward(ls.grad);
    const Tensor weak = model.logits(xw, true);
    UnsupervisedLoss lu = unsupervised_loss(weak, model.logits(xs, true), tau);
    for (float& g : lu.grad_strong.values()) g *= float(lambda);
    model.backward(lu.grad_strong);
  };
  Rng pick(1);
  const auto r = nn::check_gradients(model.parameters(), loss, backward, 1e-2, 0, pick);
  CHECK(r.relative_error < 1e-4);
  CHECK(r.skipped == 0);
}

TEST_CASE("FixMatch training") {
  const test::Toy toy = test::make_toy(600, 12, 3, 2);
  const Tensor& features = toy.data.train[0];
  const auto& truth = toy.data.train_labels;
  const data::Augmenter aug = tabular_augmenter(toy.dataset);
  Rng rng(3);
  const nn::Sequential bottom = nn::make_fcnn(6, 16, 8, 3, rng);

  FixMatchOptions options;
  options.steps = 150;
  options.sgd.lr = 0.05f;

  SUBCASE("lambda_u = 0 ignores the unlabeled rows") {
    options.lambda_u = 0.0;
    const auto known = reveal_known_labels(truth, 30, 1);
    Tensor scrambled = features;
    std::vector<std::uint8_t> keep(features.rows(), 0);
    for (std::size_t i : known.indices) keep[i] = 1;
    for (std::size_t r = 0; r < scrambled.rows(); ++r)
      if (!keep[r])
        for (float& v : scrambled.row(r)) v = 0.5f;
    SurrogateModel a = init_surrogate(bottom, Tensor({1, 6}), 3, 5);
    SurrogateModel b = init_surrogate(bottom, Tensor({1, 6}), 3, 5);
    const auto ta = train_surrogate(a, features, known, aug, options, 8);
    const auto tb = train_surrogate(b, scrambled, known, aug, options, 8);
    CHECK(ta.supervised == tb.supervised);
    for (double u : ta.unsupervised) CHECK(u == 0.0);
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t k = 0; k < pa[i]->value.size(); ++k) CHECK(pa[i]->value[k] == pb[i]->value[k]);
  }
  SUBCASE("more labels help and losses stay nonnegative") {
    std::vector<double> acc;
    for (std::size_t k : {6u, 200u}) {
      SurrogateModel m = init_surrogate(bottom, Tensor({1, 6}), 3, 5);
      const auto known = reveal_known_labels(truth, k, 1);
      const auto trace = train_surrogate(m, features, known, aug, options, 8);
      for (double v : trace.supervised) CHECK(v >= 0);
      for (double v : trace.unsupervised) CHECK(v >= 0);
      acc.push_back(surrogate_accuracy(m, toy.data.test[0], toy.data.test_labels));
    }
    CHECK(acc[1] >= acc[0] - 0.02);
    CHECK(acc[1] > 0.6);
  }
  SUBCASE("untrained head is near chance") {
    SurrogateModel m = init_surrogate(bottom, Tensor({1, 6}), 3, 5);
    CHECK(surrogate_accuracy(m, features, truth) < 0.6);
  }
  SUBCASE("no labels is an error") {
    SurrogateModel m = init_surrogate(bottom, Tensor({1, 6}), 3, 5);
    CHECK_THROWS_AS(train_surrogate(m, features, {}, aug, options, 1), ValidationError);
  }
}
