#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../support/gradcheck.hpp"
#include "../support/properties.hpp"
#include "fade/darts_train.hpp"
#include "fade/data.hpp"
#include "fade/error.hpp"

using namespace fade;
using namespace fade::train;
using graph::Dag;

namespace {

data::DatasetSplits tiny_splits(std::uint64_t seed, std::size_t samples = 120) {
  Rng rng(seed);
  const auto set = data::make_xor_patterns({samples, 8, 0.3}, rng);
  return data::split(set, {1, 1, 4}, rng);
}

arch::ArchConfig tiny_arch() {
  arch::ArchConfig c;
  c.deepest_channels = 2;
  c.gmax_vertices = 3;
  return c;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = epochs;
  return c;
}

}  // namespace

TEST_CASE("regularization schedule") {
  SUBCASE("first epoch starts at r_start in both modes") {
    for (auto mode : {RegMode::kCellIndependent, RegMode::kCellDependent}) {
      const RegSchedule s{mode, 0.8, -0.5, 10, 3};
      for (double r : reg_factors(0, s)) CHECK(r == 0.8);
    }
  }
  SUBCASE("cell independent ramp crosses zero at the midpoint") {
    const RegSchedule s{RegMode::kCellIndependent, 1.0, -1.0, 50, 4};
    CHECK(reg_factor(25, 0, s) == doctest::Approx(0.0));
    CHECK(reg_factor(25, 3, s) == doctest::Approx(0.0));
    CHECK(reg_factor(10, 2, s) == doctest::Approx(0.6));
  }
  SUBCASE("cell dependent: shallow cells cross zero first and stop at r_end") {
    const RegSchedule s{RegMode::kCellDependent, 1.0, -1.0, 50, 4};
    for (std::size_t i = 0; i + 1 < 4; ++i) CHECK(s.zero_crossing(i) < s.zero_crossing(i + 1));
    CHECK(s.zero_crossing(0) == doctest::Approx(10.0));
    CHECK(reg_factor(10, 0, s) == doctest::Approx(0.0));
    CHECK(reg_factor(49, 0, s) == doctest::Approx(-1.0));
    for (std::size_t e = 0; e < 50; ++e) {
      const auto r = reg_factors(e, s);
      for (std::size_t i = 0; i + 1 < 4; ++i) CHECK(r[i] <= r[i + 1]);
    }
  }
  SUBCASE("bounds") {
    const RegSchedule s{RegMode::kCellIndependent, 1.0, -1.0, 5, 2};
    CHECK_THROWS_AS(reg_factor(5, 0, s), BoundsError);
    CHECK_THROWS_AS(reg_factor(0, 2, s), BoundsError);
    CHECK_THROWS_AS(reg_factor(0, 0, RegSchedule{RegMode::kCellDependent, -1.0, 1.0, 5, 2}), ConfigError);
  }
}

TEST_CASE("alpha step on the regularizer alone matches the hand computation") {
  const auto splits = tiny_splits(1);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const auto batch = splits.weight_train.batch(idx);
  const auto labels = splits.weight_train.batch_labels(idx);

  for (double r : {1.0, -1.0}) {
    Rng rng(2);
    arch::HyperArchitecture h(tiny_arch(), {{data::chain_dag(2), data::chain_dag(3)}}, rng);
    const std::vector<double> before(h.alpha().raw.data().begin(), h.alpha().raw.data().end());
    const auto share_before = h.alpha().softmaxed()[0];

    // The hard sample's noise is the first draw the step makes.
    Rng replay = rng;
    const auto g = ad::gumbel_sample(2, replay);
    const double tau = h.alpha().temperature;
    const auto s = testing::softmax_of({(before[0] + g[0]) / tau, (before[1] + g[1]) / tau});
    const std::size_t k = s[0] >= s[1] ? 0 : 1;

    const double lr = 0.5;
    const std::vector<double> rs{r};
    alpha_step(h, batch, labels, rs, lr, 10.0, rng, 0.0);

    // d max_norm(onehot) / d alpha'_j = (1/tau) s_k (delta_kj - s_j) through the soft sample.
    for (std::size_t j = 0; j < 2; ++j) {
      const double grad = r * s[k] * ((j == k ? 1.0 : 0.0) - s[j]) / tau;
      CHECK(h.alpha().raw.data()[j] == doctest::Approx(before[j] - lr * grad).epsilon(1e-12));
    }
    const auto share_after = h.alpha().softmaxed()[0];
    if (r > 0)
      CHECK(share_after[k] < share_before[k]);  // flattening
    else
      CHECK(share_after[k] > share_before[k]);  // sharpening
  }
}

TEST_CASE("alpha step with r = 0 is plain loss descent") {
  const auto splits = tiny_splits(3);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
  const auto batch = splits.arch_train.batch(idx);
  const auto labels = splits.arch_train.batch_labels(idx);
  Rng rng(4);
  arch::HyperArchitecture h(tiny_arch(), {{Dag(), data::chain_dag(2), data::chain_dag(3)}}, rng);
  const std::vector<double> before(h.alpha().raw.data().begin(), h.alpha().raw.data().end());

  // Reference: the straight-through loss gradient computed directly.
  Rng replay = rng;
  ad::Value raw = h.alpha().raw;
  for (auto& w : h.weight_parameters()) w.set_requires_grad(false);
  raw.zero_grad();
  ad::cross_entropy(h.forward(batch, arch::ForwardMode::kGumbelHard, replay).logits, labels).backward();
  const std::vector<double> grad(raw.grad().begin(), raw.grad().end());
  raw.zero_grad();
  for (auto& w : h.weight_parameters()) w.set_requires_grad(true);

  const std::vector<double> zero{0.0};
  const double objective = alpha_step(h, batch, labels, zero, 0.1, 10.0, rng);
  CHECK(std::isfinite(objective));
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(h.alpha().raw.data()[j] == doctest::Approx(before[j] - 0.1 * std::clamp(grad[j], -10.0, 10.0)).epsilon(1e-12));
}

TEST_CASE("weight step leaves alpha untouched and alpha step leaves weights untouched") {
  const auto splits = tiny_splits(5);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  Rng rng(6);
  arch::HyperArchitecture h(tiny_arch(), {{data::chain_dag(2), data::chain_dag(3)}}, rng);
  const std::vector<double> alpha(h.alpha().raw.data().begin(), h.alpha().raw.data().end());
  ad::Adam opt(h.weight_parameters(), ad::AdamConfig{});
  weight_step(h, opt, splits.weight_train.batch(idx), splits.weight_train.batch_labels(idx), 10.0, rng);
  CHECK(std::vector<double>(h.alpha().raw.data().begin(), h.alpha().raw.data().end()) == alpha);

  const auto stem = h.named_weights().front().second;
  const std::vector<double> w(stem.data().begin(), stem.data().end());
  const std::vector<double> r{0.0};
  alpha_step(h, splits.arch_train.batch(idx), splits.arch_train.batch_labels(idx), r, 1.0, 10.0, rng);
  CHECK(std::vector<double>(stem.data().begin(), stem.data().end()) == w);
}

TEST_CASE("hyper training records one simplex snapshot per epoch") {
  const auto splits = tiny_splits(7);
  Rng rng(8);
  arch::HyperArchitecture h(tiny_arch(), {{Dag(), data::chain_dag(2), data::chain_dag(3)}, {Dag(), data::chain_dag(2), data::chain_dag(3)}}, rng);
  std::size_t logged = 0;
  const auto result = train_hyperarch(h, splits, tiny_train(5), RegSchedule{RegMode::kCellIndependent, 0.5, -0.5, 5, 2},
                                      rng, [&](const TrainLogRow&) { ++logged; });
  CHECK(result.completed_epochs == 5);
  CHECK(result.alpha_history.size() == 5);
  CHECK(logged == 10);
  for (const auto& snap : result.alpha_history) {
    REQUIRE(snap.size() == 2);
    for (const auto& row : snap) {
      double s = 0.0;
      for (double v : row) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  const auto avg = result.final_alpha(2);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(avg[0][j] == doctest::Approx((result.alpha_history[3][0][j] + result.alpha_history[4][0][j]) / 2));
}

TEST_CASE("width one keeps alpha at the simplex vertex") {
  const auto splits = tiny_splits(9);
  Rng rng(10);
  arch::HyperArchitecture h(tiny_arch(), {{data::chain_dag(2)}}, rng);
  const auto result = train_hyperarch(h, splits, tiny_train(3), RegSchedule{RegMode::kCellIndependent, 0, 0, 3, 1}, rng);
  for (const auto& snap : result.alpha_history) CHECK(snap[0][0] == 1.0);
}

TEST_CASE("training rejects mismatched schedules") {
  const auto splits = tiny_splits(11);
  Rng rng(12);
  arch::HyperArchitecture h(tiny_arch(), {{Dag()}, {Dag()}}, rng);
  CHECK_THROWS_AS(train_hyperarch(h, splits, tiny_train(1), RegSchedule{RegMode::kCellIndependent, 0, 0, 1, 1}, rng),
                  ConfigError);
  auto bad = tiny_train(1);
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_hyperarch(h, splits, bad, RegSchedule{RegMode::kCellIndependent, 0, 0, 1, 2}, rng), ConfigError);
}

TEST_CASE("accuracy of a frozen network with a zero classifier is the first-class prior") {
  data::LabeledSet set;
  set.height = set.width = 4;
  set.classes = 2;
  Rng rng(13);
  set.images = testing::uniform(20 * 16, rng, 0.0, 1.0);
  for (int i = 0; i < 20; ++i) set.labels.push_back(i < 18 ? 0 : 1);
  arch::DiscreteNetwork net(arch::make_conv(1, 2, rng), {arch::embody(data::chain_dag(2), 2, rng)},
                            ad::Value::parameter({2, 2}, {0, 0, 0, 0}), ad::Value::parameter({2}, {0, 0}));
  // Equal logits resolve to class 0, the majority.
  CHECK(accuracy(net, set, 7) == doctest::Approx(0.9));
}

TEST_CASE("discrete training reports an accuracy in [0, 1] and is seed deterministic") {
  const auto splits = tiny_splits(14);
  auto run = [&] {
    Rng rng(15);
    arch::DiscreteNetwork net(tiny_arch(), {data::chain_dag(2)}, rng);
    return train_discrete(net, splits, 2, tiny_train(2), rng);
  };
  const double a = run();
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
  CHECK(run() == a);
}
