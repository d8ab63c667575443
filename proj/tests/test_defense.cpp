#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "planted.hpp"
#include "support.hpp"
#include "vfl/core/error.hpp"
#include "vfl/defense/dae.hpp"

using namespace vfl;
using namespace vfl::defense;

namespace {

DaeOptions small_options() {
  DaeOptions o;
  o.hidden1 = 16;
  o.hidden2 = 8;
  o.bottleneck = 3;
  o.epochs = 60;
  o.batch = 32;
  o.adam.lr = 3e-3f;
  return o;
}

// A DAE whose reconstruction is the constant `bias`, in raw coordinates.
DaeModel constant_dae(std::size_t dim, float bias) {
  Rng rng(1);
  DaeOptions o = small_options();
  DaeModel m(dim, o, rng);
  auto params = m.net().parameters();
  params[params.size() - 2]->value.fill(0.0f);
  params.back()->value.fill(bias);
  return m;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("grouping by label partitions the batch") {
  const Tensor e = test::random_tensor({7, 3}, 1);
  const std::vector<Label> labels{2, 0, 2, 1, 0, 2, 1};
  const auto groups = group_by_label(e, labels);
  REQUIRE(groups.size() == 3);
  std::vector<std::size_t> seen;
  for (const ClassGroup& g : groups) {
    CHECK(g.data.rows() == g.rows.size());
    for (std::size_t j = 0; j < g.rows.size(); ++j) {
      CHECK(labels[g.rows[j]] == g.label);
      for (std::size_t k = 0; k < 3; ++k) CHECK(g.data.at(j, k) == e.at(g.rows[j], k));
      seen.push_back(g.rows[j]);
    }
  }
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK(groups[0].label == 0);
  CHECK_THROWS_AS(group_by_label(e, std::vector<Label>{1, 2}), ValidationError);
}

TEST_CASE("reconstruction RMSE") {
  DaeModel flat = constant_dae(5, 0.25f);
  const std::vector<float> exact(5, 0.25f);
  CHECK(rmse(flat, exact) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<float> off(5, 0.55f);
  CHECK(rmse(flat, off) == doctest::Approx(0.3).epsilon(1e-6));

  Rng rng(4);
  DaeModel m(6, small_options(), rng);
  const Tensor data = test::random_tensor({40, 6}, 5);
  m.fit(data, small_options(), 2);
  const Tensor row = test::random_tensor({1, 6}, 6, 2.0f);
  // Oracle: standardize by hand, run the network, reduce in double.
  Tensor z = row;
  for (std::size_t j = 0; j < 6; ++j) z[j] = (row[j] - m.mean()[j]) / m.scale()[j];
  const Tensor y = m.net().forward(z, false);
  double s = 0;
  for (std::size_t j = 0; j < 6; ++j) s += (double(z[j]) - y[j]) * (double(z[j]) - y[j]);
  CHECK(test::relative_difference(rmse(m, row.row(0)), std::sqrt(s / 6)) < 1e-6);
  CHECK(m.reconstruct(m.encode_input(data)).shape() == data.shape());
}

TEST_CASE("thresholds use median plus k MAD with a floor") {
  DaeOptions o = small_options();
  o.k = 2.5;
  DaeBank bank;
  bank.models.push_back(constant_dae(4, 0.0f));
  bank.model_for[1] = 0;
  bank.model_for[3] = 0;
  const Tensor rows = test::random_tensor({9, 4}, 7);
  const std::vector<Label> labels{1, 1, 1, 1, 1, 3, 3, 3, 3};
  const auto groups = group_by_label(rows, labels);
  const ThresholdTable t = calibrate_thresholds(bank, groups, o);
  for (const ClassGroup& g : groups) {
    std::vector<double> errs;
    for (std::size_t r = 0; r < g.data.rows(); ++r) errs.push_back(rmse(bank.models[0], g.data.row(r)));
    const double med = median_of(errs);
    std::vector<double> dev;
    for (double e : errs) dev.push_back(std::fabs(e - med));
    CHECK(t.theta.at(g.label) == doctest::Approx(med + 2.5 * median_of(dev)).epsilon(1e-9));
  }

  // A perfectly reconstructed class still gets a positive threshold.
  DaeBank exact;
  exact.models.push_back(constant_dae(4, 0.5f));
  exact.model_for[0] = 0;
  Tensor same({6, 4});
  same.fill(0.5f);
  const auto g0 = group_by_label(same, std::vector<Label>(6, 0));
  const ThresholdTable tf = calibrate_thresholds(exact, g0, o);
  CHECK(tf.theta.at(0) > 0);
  CHECK(tf.theta.at(0) == doctest::Approx(o.k * o.mad_floor));

  DaeOptions pct = o;
  pct.rule = ThresholdRule::kPercentile;
  pct.percentile = 1.0;
  const ThresholdTable tp = calibrate_thresholds(bank, groups, pct);
  double worst = 0;
  for (std::size_t r = 0; r < 5; ++r) worst = std::max(worst, rmse(bank.models[0], rows.row(r)));
  CHECK(tp.theta.at(1) == doctest::Approx(worst));
}

TEST_CASE("filter keeps exactly the rows at or below the threshold") {
  DaeBank bank;
  bank.models.push_back(constant_dae(3, 0.0f));
  bank.model_for[0] = 0;
  bank.model_for[1] = 0;
  const Tensor rows({5, 3}, {0.1f, 0.1f, 0.1f, 0.2f, 0.2f, 0.2f, 0.3f, 0.3f, 0.3f, 0.4f, 0.4f, 0.4f, 9, 9, 9});
  const std::vector<Label> labels{0, 0, 1, 1, 2};
  ThresholdTable t;
  t.theta[0] = rmse(bank.models[0], rows.row(1));  // boundary row stays
  t.theta[1] = 0.35;
  const FilterResult f = filter(rows, labels, bank, t);
  CHECK(f.keep == std::vector<std::uint8_t>{1, 1, 1, 0, 1});  // class 2 has no model
  CHECK(f.rmse[3] == doctest::Approx(0.4).epsilon(1e-6));

  ThresholdTable below = t;
  below.theta[0] = std::nextafter(t.theta[0], 0.0);
  CHECK(filter(rows, labels, bank, below).keep[1] == 0);

  // Reference predicate on random data.
  const Tensor r = test::random_tensor({30, 3}, 9);
  std::vector<Label> lab(30);
  for (std::size_t i = 0; i < 30; ++i) lab[i] = Label(i % 2);
  ThresholdTable mid;
  mid.theta[0] = 0.8;
  mid.theta[1] = 1.1;
  const FilterResult fr = filter(r, lab, bank, mid);
  for (std::size_t i = 0; i < 30; ++i)
    CHECK(fr.keep[i] == (rmse(bank.models[0], r.row(i)) <= mid.theta[lab[i]]));
}

TEST_CASE("filtering is permutation equivariant") {
  const test::Planted p = test::planted(60, 6, 3);
  std::vector<Label> labels(p.rows.rows());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = Label(i % 3);
  DaeOptions o = small_options();
  o.epochs = 10;
  DaeBank bank = train_dae(group_by_label(p.rows, labels), o, 4);
  const ThresholdTable t = calibrate_thresholds(bank, group_by_label(p.rows, labels), o);
  const FilterResult base = filter(p.rows, labels, bank, t);

  Rng rng(8);
  const auto perm = rng.permutation(labels.size());
  std::vector<Label> plabels;
  for (std::size_t i : perm) plabels.push_back(labels[i]);
  const FilterResult shuffled = filter(gather_rows(p.rows, perm), plabels, bank, t);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    CHECK(shuffled.keep[j] == base.keep[perm[j]]);
    CHECK(shuffled.rmse[j] == base.rmse[perm[j]]);
  }
}

TEST_CASE("planted outliers are found") {
  const test::PlantedScore s = test::score_planted();
  INFO("flagged " << s.flagged << " true positives " << s.true_positives);
  CHECK(s.recall() >= 0.9);
  // median + 3 MAD sits near two standard deviations, so a few inliers go too.
  CHECK(s.false_positive_rate() <= 0.1);
}

TEST_CASE("shared mode trains one model for every class") {
  const Tensor rows = test::random_tensor({40, 5}, 2);
  std::vector<Label> labels(40);
  for (std::size_t i = 0; i < 40; ++i) labels[i] = Label(i % 4);
  DaeOptions o = small_options();
  o.epochs = 2;
  o.per_class = false;
  DaeBank shared = train_dae(group_by_label(rows, labels), o, 1);
  CHECK(shared.models.size() == 1);
  CHECK(shared.model_for.size() == 4);
  o.per_class = true;
  DaeBank each = train_dae(group_by_label(rows, labels), o, 1);
  CHECK(each.models.size() == 4);
  CHECK(each.find(7) == nullptr);
}

TEST_CASE("server-side defense lifecycle") {
  DaeOptions o = small_options();
  o.epochs = 5;
  o.calibration_epoch = 3;
  o.recalibrate_every = 2;
  DaeDefense defense(o, 1);
  CHECK_FALSE(defense.wants_calibration(2));
  CHECK(defense.wants_calibration(3));
  CHECK_FALSE(defense.wants_calibration(4));
  CHECK(defense.wants_calibration(5));

  const Tensor rows = test::random_tensor({20, 4}, 3);
  const std::vector<Label> labels(20, 1);
  std::vector<std::size_t> idx(20);
  for (std::size_t i = 0; i < 20; ++i) idx[i] = 100 + i;
  std::vector<AnomalyRecord> log;
  defense.set_log([&](const AnomalyRecord& r) { log.push_back(r); });
  CHECK(defense.screen(2, rows, labels, idx) == std::vector<std::uint8_t>(20, 1));
  CHECK(log.empty());

  defense.calibrate(3, rows, labels);
  CHECK(defense.calibrated());
  CHECK(defense.thresholds().theta.at(1) > 0);
  const auto keep = defense.screen(3, rows, labels, idx);
  REQUIRE(log.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(log[i].sample_index == 100 + i);
    CHECK(log[i].epoch == 3);
    CHECK(log[i].filtered == !keep[i]);
  }
}
