#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "../support/gradcheck.hpp"
#include "fade/checkpoint.hpp"
#include "fade/error.hpp"
#include "fade/optim.hpp"

using namespace fade;
using namespace fade::ad;

TEST_CASE("relu subgradient") {
  auto x = Value::parameter({2}, {-1.0, 2.0});
  testing::project(relu(x), {1.0, 1.0}).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("cross entropy of uniform logits is log k") {
  for (std::size_t k : {2u, 3u, 10u}) {
    auto logits = Value::constant({4, k}, std::vector<double>(4 * k, 0.7));
    const std::vector<int> labels{0, 1, 0, 1};
    CHECK(cross_entropy(logits, labels).item() == doctest::Approx(std::log(static_cast<double>(k))));
  }
}

TEST_CASE("primitive gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : testing::primitive_gradchecks(seed)) {
      INFO(c.name << " seed " << seed);
      CHECK(c.error < 1e-4);
    }
  }
}

TEST_CASE("composed network gradient matches finite differences") {
  for (std::uint64_t seed : {4u, 5u}) CHECK(testing::composed_gradcheck(seed) < 1e-3);
}

TEST_CASE("straight-through one-hot") {
  auto soft = Value::parameter({3}, {0.2, 0.5, 0.3});
  auto hard = straight_through_onehot(soft);
  CHECK(std::vector<double>(hard.data().begin(), hard.data().end()) == std::vector<double>{0, 1, 0});
  testing::project(hard, {1.0, 2.0, 3.0}).backward();
  CHECK(std::vector<double>(soft.grad().begin(), soft.grad().end()) == std::vector<double>{1, 2, 3});
}

TEST_CASE("conv2d keeps the spatial size") {
  Rng rng(1);
  auto x = testing::param({2, 3, 7, 5}, rng);
  auto k = testing::param({4, 3, 5, 5}, rng);
  CHECK(conv2d(x, k).shape() == Shape{2, 4, 7, 5});
  CHECK(max_pool2d(x).shape() == Shape{2, 3, 3, 2});
  CHECK_THROWS_AS(conv2d(x, testing::param({4, 2, 5, 5}, rng)), ShapeError);
  CHECK_THROWS_AS(conv2d(x, testing::param({4, 3, 4, 4}, rng)), ShapeError);
}

TEST_CASE("gradients accumulate until cleared") {
  auto x = Value::parameter({1}, {2.0});
  scale(x, 3.0).backward();
  scale(x, 3.0).backward();
  CHECK(x.grad()[0] == 6.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("non-finite values are rejected") {
  CHECK_THROWS_AS(check_finite(std::vector<double>{1.0, NAN}, "test"), NumericError);
  auto big = Value::constant({1}, {1e308});
  CHECK_THROWS_AS(scale(big, 10.0), NumericError);
}

TEST_CASE("constants carry no history") {
  auto c = Value::constant({2}, {1.0, 2.0});
  auto y = relu(c);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("adam single step by hand") {
  const AdamConfig cfg;  // lr 1e-3, beta1 0.1, beta2 1e-3, eps 1e-8, wd 1e-4
  std::vector<double> p{1.0};
  AdamState state(1, cfg);
  adam_step(p, std::vector<double>{1.0}, state);
  // m_hat = v_hat = 1 after bias correction.
  const double expected = 1.0 - 1e-3 * (1.0 / (1.0 + 1e-8) + 1e-4 * 1.0);
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.99899990001).epsilon(1e-12));
  CHECK(state.step_count == 1);
}

TEST_CASE("adam fixed point and determinism") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> p{0.3, -0.2};
  AdamState s(2, cfg);
  adam_step(p, std::vector<double>{0.0, 0.0}, s);
  CHECK(p == std::vector<double>{0.3, -0.2});

  std::vector<double> a{0.5, 0.5}, b{0.5, 0.5};
  AdamState sa(2, AdamConfig{}), sb(2, AdamConfig{});
  for (int i = 0; i < 2; ++i) {
    adam_step(a, std::vector<double>{0.1, -0.4}, sa);
    adam_step(b, std::vector<double>{0.1, -0.4}, sb);
  }
  CHECK(a == b);
}

TEST_CASE("adam optimizer skips parameters without gradients") {
  auto p = Value::parameter({1}, {1.0});
  auto q = Value::parameter({1}, {1.0});
  Adam opt({p, q}, AdamConfig{});
  scale(p, 2.0).backward();
  opt.step();
  CHECK(p.data()[0] < 1.0);
  CHECK(q.data()[0] == 1.0);
}

TEST_CASE("gradient clipping") {
  auto p = Value::parameter({3}, {0.0, 0.0, 0.0});
  auto g = p.mutable_grad();
  g[0] = 15.0;
  g[1] = -3.0;
  g[2] = -12.0;
  std::vector<Value> ps{p};
  clip_gradients(ps, 10.0);
  CHECK(p.grad()[0] == 10.0);
  CHECK(p.grad()[1] == -3.0);
  CHECK(p.grad()[2] == -10.0);
}

TEST_CASE("kaiming statistics") {
  Rng rng(7);
  const auto w = kaiming_init(100000, 50, rng);
  double mean = 0.0, var = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (double v : w) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size());
  CHECK(std::abs(mean) <= 0.01);
  CHECK(std::abs(var - 0.04) <= 0.004);

  Rng again(7);
  CHECK(kaiming_init(100000, 50, again) == w);
}

TEST_CASE("gumbel statistics") {
  Rng rng(9);
  const auto g = gumbel_sample(1000000, rng);
  double mean = 0.0, var = 0.0;
  std::size_t finite = 0;
  for (double v : g) {
    finite += std::isfinite(v);
    mean += v;
  }
  CHECK(finite == g.size());
  mean /= static_cast<double>(g.size());
  for (double v : g) var += (v - mean) * (v - mean);
  var /= static_cast<double>(g.size());
  CHECK(std::abs(mean - std::numbers::egamma) <= 0.01);
  CHECK(std::abs(var - std::numbers::pi * std::numbers::pi / 6.0) <= 0.03);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "fade_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::vector<NamedTensor> tensors{{"a", {2, 2}, {1.0, -2.5, 3.25, 1e-300}}, {"b", {1}, {42.0}}};
  save_checkpoint(dir / "w", tensors);
  const auto back = load_checkpoint(dir / "w");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK(back[i].shape == tensors[i].shape);
    CHECK(back[i].data == tensors[i].data);
  }
  std::filesystem::resize_file(dir / "w.bin", 8);
  CHECK_THROWS_AS(load_checkpoint(dir / "w"), FormatError);
  std::filesystem::remove_all(dir);
}
