#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "toy_system.hpp"
#include "vfl/core/error.hpp"
#include "vfl/nn/loss.hpp"
#include "vfl/protocol/checkpoint.hpp"

using namespace vfl;
using namespace vfl::protocol;

namespace {

const Geometry kMnist{data::Layout::kImage, 1, 28, 28};
const Geometry kCifar{data::Layout::kImage, 3, 32, 32};

double max_relative(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(double(a[i]) - b[i]) / std::max(1e-6, std::fabs(double(b[i]))));
  return worst;
}

double norm_relative(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double d = 0, n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    n += double(b[i]) * b[i];
  }
  return std::sqrt(d / std::max(n, 1e-30));
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("image partitions are contiguous row bands") {
  const auto halves = partition_features(kMnist, 2, equal_split(kMnist, 2));
  REQUIRE(halves.size() == 2);
  CHECK(halves[0].begin == 0);
  CHECK(halves[0].end == 14);
  CHECK(halves[1].begin == 14);
  CHECK(halves[1].end == 28);
  CHECK(halves[0].feature_dims() == 14 * 28);

  const auto band = partition_features(kCifar, 2, adversary_band(kCifar, 4));
  CHECK(band[0].begin == 0);
  CHECK(band[0].end == 4);
  CHECK(band[1].begin == 4);
  CHECK(band[1].end == 32);
  CHECK(band[0].local_geometry().channels == 3);
  CHECK(band[0].feature_dims() == 3 * 4 * 32);
}

TEST_CASE("band extraction copies every channel of the owned rows") {
  const Geometry g{data::Layout::kImage, 3, 4, 5};
  const Tensor x = test::random_tensor({2, 3, 4, 5}, 1);
  const auto parts = partition_features(g, 2, SplitSpec{{1, 3}});
  const Tensor lower = parts[1].extract(x);
  REQUIRE(lower.shape() == Shape{2, 3, 3, 5});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t xx = 0; xx < 5; ++xx)
          CHECK(lower[((n * 3 + c) * 3 + y) * 5 + xx] == x[((n * 3 + c) * 4 + y + 1) * 5 + xx]);
}

TEST_CASE("single participant partition is the identity") {
  const auto whole = partition_features(kMnist, 1, SplitSpec{{28}});
  const Tensor x = test::uniform_tensor({3, 784}, 2);
  const Tensor y = whole[0].extract(x);
  CHECK(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  const Geometry tab{data::Layout::kTabular, 1, 1, 10};
  const Tensor t = test::uniform_tensor({4, 10}, 3);
  const Tensor u = partition_features(tab, 1, SplitSpec{{10}})[0].extract(t);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(u[i] == t[i]);
}

TEST_CASE("invalid split specs are rejected") {
  CHECK_THROWS_AS(partition_features(kMnist, 2, SplitSpec{{14, 13}}), ValidationError);
  CHECK_THROWS_AS(partition_features(kMnist, 2, SplitSpec{{14, 15}}), ValidationError);
  CHECK_THROWS_AS(partition_features(kMnist, 2, SplitSpec{{0, 28}}), ValidationError);
  CHECK_THROWS_AS(partition_features(kMnist, 3, SplitSpec{{14, 14}}), ValidationError);
  CHECK_THROWS_AS(adversary_band(kCifar, 32), ValidationError);
  CHECK_THROWS_AS(adversary_band(kCifar, 0), ValidationError);
  const auto parts = partition_features(kMnist, 2, equal_split(kMnist, 2));
  CHECK_THROWS_AS(parts[0].extract(Tensor({2, 100})), ValidationError);
}

TEST_CASE("metrics on trivial classifiers") {
  const std::vector<Label> truth{0, 1, 0, 1, 1, 0};
  const Metrics perfect = score(truth, truth);
  CHECK(perfect.f1 == doctest::Approx(1.0));
  CHECK(perfect.accuracy == doctest::Approx(1.0));

  std::vector<Label> ten;
  for (int r = 0; r < 50; ++r)
    for (int c = 0; c < 10; ++c) ten.push_back(c);
  const std::vector<Label> constant(ten.size(), 3);
  const Metrics m = score(ten, constant);
  CHECK(m.accuracy == doctest::Approx(0.1));
  // Only class 3 scores: precision 0.1, recall 1.
  CHECK(m.f1 == doctest::Approx((2 * 0.1 / 1.1) / 10));

  // Degenerate single-class truth: accuracy equals that class's recall.
  const std::vector<Label> ones(8, 1);
  const std::vector<Label> guess{1, 1, 0, 1, 2, 1, 1, 0};
  CHECK(accuracy(ones, guess) == doctest::Approx(5.0 / 8));
}

TEST_CASE("uniform random guessing on 10 balanced classes scores about 0.1") {
  Rng rng(11);
  std::vector<Label> truth(10000), guess(10000);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = Label(i % 10);
    guess[i] = Label(rng.below(10));
  }
  const Metrics m = score(truth, guess);
  CHECK(std::fabs(m.accuracy - 0.1) <= 0.01);
  CHECK(m.f1 >= 0.0);
  CHECK(m.f1 <= 1.0);
}

TEST_CASE("split forward and backward equal the monolithic composition") {
  const test::Toy toy = test::make_toy();
  nn::SgdOptions frozen{0.0f, 0.0f, 0.0f};
  VflSystem system = test::make_toy_system(toy, 21, false, frozen);

  nn::Sequential b0 = system.participant(0).bottom();
  nn::Sequential b1 = system.participant(1).bottom();
  nn::Sequential top = system.server().top();

  const std::vector<std::size_t> idx{3, 17, 40, 41, 90, 5, 66};
  const Tensor x0 = gather_rows(toy.data.train[0], idx);
  const Tensor x1 = gather_rows(toy.data.train[1], idx);
  const Tensor e0 = b0.forward(x0, true), e1 = b1.forward(x1, true);
  const Tensor* parts[] = {&e0, &e1};
  const Tensor logits = top.forward(concat_columns(parts), true);
  const std::vector<Label> labels = system.server().labels_for(idx);
  const nn::LossValue loss = nn::cross_entropy(logits, labels);
  const Tensor g = top.backward(loss.grad);
  b0.backward(slice_columns(g, 0, 4));
  b1.backward(slice_columns(g, 4, 4));

  CHECK(max_relative(system.forward_round({1, 0, idx, false}), logits) < 1e-6);

  const RoundResult r = system.train_step({1, 0, idx, true});
  CHECK(test::relative_difference(r.loss, loss.value) < 1e-6);
  CHECK(r.kept == idx.size());
  auto compare = [](nn::Layer& split, nn::Layer& mono) {
    const auto a = split.parameters(), b = mono.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(norm_relative(a[i]->grad, b[i]->grad) < 1e-6);
  };
  compare(system.participant(0).bottom(), b0);
  compare(system.participant(1).bottom(), b1);
  compare(system.server().top(), top);
}

TEST_CASE("the adversary only ever sees its own slice") {
  const test::Toy toy = test::make_toy();
  VflSystem system = test::make_toy_system(toy, 4, true);
  Participant& adv = *system.adversary();
  adv.set_audit(true);
  const std::size_t own_features = adv.partition().feature_dims();
  std::size_t violations = 0, calls = 0;
  adv.set_feature_transform([&](const Tensor& batch, std::span<const std::size_t> indices, std::size_t) {
    ++calls;
    const Tensor mine = gather_rows(toy.data.train[adv.id()], indices);
    if (batch.row_size() != own_features || max_relative(batch, mine) != 0.0) ++violations;
    return batch;
  });
  adv.set_embedding_transform([&](const Tensor& e, std::span<const std::size_t>, std::size_t) {
    if (e.row_size() != adv.embedding_dim()) ++violations;
    return e;
  });
  (void)system.run_epoch(1, 16, 9);
  CHECK(calls == 6);
  CHECK(violations == 0);
  std::size_t gradients = 0;
  for (const AccessRecord& rec : adv.access_log()) {
    CHECK(rec.owner == adv.id());
    gradients += rec.what == "gradient";
  }
  CHECK(gradients == 6);
  CHECK(adv.training_features().row_size() == own_features);
}

TEST_CASE("honest participants cannot install transforms") {
  const test::Toy toy = test::make_toy();
  VflSystem system = test::make_toy_system(toy, 4, false);
  auto same = [](const Tensor& t, std::span<const std::size_t>, std::size_t) { return t; };
  CHECK_THROWS_AS(system.participant(0).set_feature_transform(same), ProtocolError);
  CHECK_THROWS_AS(system.participant(1).set_embedding_transform(same), ProtocolError);
}

TEST_CASE("protocol and configuration errors") {
  const test::Toy toy = test::make_toy();
  VflSystem system = test::make_toy_system(toy, 4, false);

  TrainingConfig config;
  config.epochs = 1;
  config.attack = AttackHooks{};
  CHECK_THROWS_AS(train_vfl(system, toy.data, config), ConfigError);

  Rng rng(1);
  CHECK_THROWS_AS(Server(nn::make_fcnn(7, 8, 3, 3, rng), {4, 4}, toy.data.train_labels, {}),
                  ConfigError);

  const std::vector<std::size_t> idx{0, 1, 2};
  BatchRequest request{1, 0, idx, true};
  auto u0 = system.participant(0).respond(request);
  auto u1 = system.participant(1).respond(request);
  u1.embedding = Tensor({3, 5});
  CHECK_THROWS_AS(system.server().concatenate(request, {u0, u1}), ConfigError);
  CHECK_THROWS_AS(system.server().concatenate(request, {u0}), ProtocolError);

  CHECK_THROWS_AS(system.participant(0).apply_gradient({0, idx, Tensor({3, 5})}), ProtocolError);
  CHECK_THROWS_AS(system.participant(0).apply_gradient({1, idx, Tensor({3, 4})}), ProtocolError);
  CHECK_THROWS_AS(system.participant(0).apply_gradient({0, {0, 1, 9}, Tensor({3, 4})}), ProtocolError);
  CHECK_NOTHROW(system.participant(0).apply_gradient({0, idx, Tensor({3, 4})}));
}

TEST_CASE("training is deterministic under a fixed seed") {
  const test::Toy toy = test::make_toy();
  TrainingConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.seed = 8;
  VflSystem a = test::make_toy_system(toy, 30), b = test::make_toy_system(toy, 30);
  const TrainResult ra = train_vfl(a, toy.data, config);
  const TrainResult rb = train_vfl(b, toy.data, config);
  REQUIRE(ra.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(ra.history[e].train_loss == rb.history[e].train_loss);
    CHECK(ra.history[e].test.f1 == rb.history[e].test.f1);
  }
  CHECK(ra.history[0].epoch == 1);
  CHECK(epoch_order(50, 1, 2) == epoch_order(50, 1, 2));
  CHECK(epoch_order(50, 1, 2) != epoch_order(50, 1, 3));
}

TEST_CASE("checkpoint files round trip and reject corruption") {
  const auto dir = test::scratch_dir("ckpt");
  Checkpoint ck;
  ck.key = {"run-x", 3, 1};
  ck.tensors.emplace_back("w", test::random_tensor({2, 3}, 4));
  ck.tensors.emplace_back("b", test::random_tensor({5}, 5));
  const auto path = checkpoint_path(dir, ck.key);
  CHECK(path == dir / "run-x" / "epoch_3" / "participant_1.ckpt");
  std::filesystem::create_directories(path.parent_path());
  write_checkpoint(path, ck);
  const Checkpoint back = read_checkpoint(path);
  CHECK(back.key == ck.key);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[1].first == "b");
  CHECK(max_relative(back.tensors[0].second, ck.tensors[0].second) == 0.0);

  auto bytes = data::read_file(path);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  data::write_file(path, flipped);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  data::write_file(path, std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 20));
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  bytes[0] = 'X';
  data::write_file(path, bytes);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
}

TEST_CASE("resuming from a system checkpoint continues the same trajectory") {
  const test::Toy toy = test::make_toy();
  const auto dir = test::scratch_dir("resume");
  TrainingConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.seed = 2;

  VflSystem straight = test::make_toy_system(toy, 12);
  const TrainResult full = train_vfl(straight, toy.data, config);

  VflSystem first = test::make_toy_system(toy, 12);
  TrainingConfig head = config;
  head.epochs = 1;
  (void)train_vfl(first, toy.data, head);
  save_system(dir, "toy", 1, first);

  VflSystem resumed = test::make_toy_system(toy, 99);
  CHECK(has_system_checkpoint(dir, "toy", 1, resumed));
  CHECK_FALSE(has_system_checkpoint(dir, "toy", 2, resumed));
  load_system(dir, "toy", 1, resumed);
  const TrainResult tail = train_vfl(resumed, toy.data, config, 2);
  REQUIRE(tail.history.size() == 2);
  CHECK(tail.history[0].epoch == 2);
  CHECK(tail.history[1].train_loss == full.history[2].train_loss);
  CHECK(tail.final.f1 == full.final.f1);

  const Tensor x = toy.data.test[0];
  const auto idx = iota(4);
  CHECK(max_relative(resumed.participant(0).embed(gather_rows(x, idx)),
                     straight.participant(0).embed(gather_rows(x, idx))) == 0.0);
}

TEST_CASE("a round with every row screened out updates nobody") {
  struct RejectAll : EmbeddingDefense {
    bool wants_calibration(std::size_t) const override { return false; }
    void calibrate(std::size_t, const Tensor&, std::span<const Label>) override {}
    std::vector<std::uint8_t> screen(std::size_t, const Tensor& e, std::span<const Label>,
                                     std::span<const std::size_t>) override {
      return std::vector<std::uint8_t>(e.rows(), 0);
    }
  };
  const test::Toy toy = test::make_toy();
  VflSystem system = test::make_toy_system(toy, 4, false, nn::SgdOptions{0.1f, 0.9f, 0.0f});
  const std::vector<std::size_t> idx{1, 2, 3, 4};
  system.train_step({1, 0, idx, true});  // builds momentum

  auto snapshot = [&] {
    std::vector<float> v;
    auto add = [&](nn::Layer& l) {
      for (auto* p : l.parameters()) v.insert(v.end(), p->value.values().begin(), p->value.values().end());
    };
    add(system.participant(0).bottom());
    add(system.participant(1).bottom());
    add(system.server().top());
    return v;
  };
  const auto before = snapshot();
  RejectAll reject;
  system.server().set_defense(&reject);
  const RoundResult r = system.train_step({1, 1, idx, true});
  CHECK(r.kept == 0);
  CHECK(snapshot() == before);

  system.server().set_defense(nullptr);
  system.train_step({1, 2, idx, true});
  CHECK(snapshot() != before);
}
