#pragma once

// Central finite-difference gradient checks, shared by the unit and
// acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/random.hpp"

namespace fade::testing {

// sum_i c_i x_i as a scalar node; reduces any output to a loss.
inline ad::Value project(const ad::Value& x, std::vector<double> c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * x.data()[i];
  auto node = std::make_shared<ad::Node>();
  node->shape = {1};
  node->data = {s};
  if (x.requires_grad()) {
    node->requires_grad = true;
    node->inputs = {x.node()};
    node->backward = [c = std::move(c)](ad::Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < c.size(); ++i) g[i] += c[i] * self.grad[0];
    };
  }
  return ad::Value(std::move(node));
}

inline std::vector<double> uniform(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Entries bounded away from zero so ReLU kinks are not straddled.
inline std::vector<double> away_from_zero(std::size_t n, Rng& rng) {
  auto v = uniform(n, rng, 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& x : v)
    if (flip(rng)) x = -x;
  return v;
}

inline ad::Value param(ad::Shape shape, Rng& rng) {
  const auto n = ad::numel(shape);
  return ad::Value::parameter(std::move(shape), uniform(n, rng));
}

using Loss = std::function<ad::Value(const std::vector<ad::Value>&)>;

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over
// every entry of every parameter.
inline double gradcheck(const Loss& loss, std::vector<ad::Value> params, double step = 1e-5, double floor = 1e-6) {
  for (auto& p : params) p.zero_grad();
  loss(params).backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.size(), 0.0);
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = loss(params).item();
      data[i] = saved - step;
      const double down = loss(params).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

struct GradcheckCase {
  const char* name;
  double error;
};

// Every differentiable primitive, each reduced by a random projection.
inline std::vector<GradcheckCase> primitive_gradchecks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradcheckCase> out;
  auto proj = [&rng](std::size_t n) { return uniform(n, rng); };

  {
    auto x = ad::Value::parameter({1, 2, 5, 5}, uniform(50, rng));
    auto k = param({3, 2, 5, 5}, rng);
    auto b = param({3}, rng);
    const auto c = proj(75);
    out.push_back({"conv2d", gradcheck([&](const auto& p) { return project(ad::conv2d(p[0], p[1], p[2]), c); }, {x, k, b})});
  }
  {
    auto x = ad::Value::parameter({1, 1, 5, 5}, uniform(25, rng));
    auto k = param({1, 1, 5, 5}, rng);
    const auto c = proj(25);
    out.push_back({"conv2d_no_bias", gradcheck([&](const auto& p) { return project(ad::conv2d(p[0], p[1]), c); }, {x, k})});
  }
  {
    auto x = param({3, 4}, rng), w = param({2, 4}, rng), b = param({2}, rng);
    const auto c = proj(6);
    out.push_back({"linear", gradcheck([&](const auto& p) { return project(ad::linear(p[0], p[1], p[2]), c); }, {x, w, b})});
  }
  {
    auto x = ad::Value::parameter({2, 5}, away_from_zero(10, rng));
    const auto c = proj(10);
    out.push_back({"relu", gradcheck([&](const auto& p) { return project(ad::relu(p[0]), c); }, {x})});
  }
  {
    auto x = param({2, 2, 5, 4}, rng);
    const auto c = proj(2 * 2 * 2 * 2);
    out.push_back({"max_pool2d", gradcheck([&](const auto& p) { return project(ad::max_pool2d(p[0]), c); }, {x})});
  }
  {
    auto x = param({2, 3, 4, 4}, rng);
    const auto c = proj(6);
    out.push_back({"global_avg_pool", gradcheck([&](const auto& p) { return project(ad::global_avg_pool(p[0]), c); }, {x})});
  }
  {
    auto a = param({2, 3}, rng), b = param({2, 3}, rng), d = param({2, 3}, rng);
    const auto c = proj(6);
    out.push_back({"add", gradcheck([&](const auto& p) { return project(ad::add(p[0], p[1]), c); }, {a, b})});
    out.push_back({"add_n", gradcheck([&](const auto& p) { return project(ad::add_n({p[0], p[1], p[2]}), c); }, {a, b, d})});
    out.push_back({"scale", gradcheck([&](const auto& p) { return project(ad::scale(p[0], -1.7), c); }, {a})});
    const auto offset = uniform(6, rng);
    out.push_back(
        {"add_constant", gradcheck([&](const auto& p) { return project(ad::add_constant(p[0], offset), c); }, {a})});
  }
  {
    auto v = param({4}, rng);
    auto m = param({2, 4}, rng);
    const auto c1 = proj(4), c2 = proj(8);
    out.push_back({"softmax_1d", gradcheck([&](const auto& p) { return project(ad::softmax(p[0]), c1); }, {v})});
    out.push_back({"softmax_2d", gradcheck([&](const auto& p) { return project(ad::softmax(p[0]), c2); }, {m})});
  }
  {
    auto logits = param({4, 3}, rng);
    const std::vector<int> labels{0, 2, 1, 2};
    out.push_back({"cross_entropy", gradcheck([&](const auto& p) { return ad::cross_entropy(p[0], labels); }, {logits})});
  }
  {
    auto x = ad::Value::parameter({5}, {0.3, -0.9, 0.5, 0.1, -0.2});
    out.push_back({"max_norm", gradcheck([&](const auto& p) { return ad::max_norm(p[0]); }, {x})});
  }
  {
    auto x = param({3, 4}, rng);
    const auto c = proj(4);
    out.push_back({"row", gradcheck([&](const auto& p) { return project(ad::row(p[0], 1), c); }, {x})});
  }
  {
    auto x = param({2, 2, 3, 3}, rng);
    const auto c = proj(2 * 5 * 9);
    out.push_back({"tile_channels", gradcheck([&](const auto& p) { return project(ad::tile_channels(p[0], 5), c); }, {x})});
  }
  {
    auto x = param({2, 3}, rng), w = param({4}, rng);
    const auto c = proj(6);
    out.push_back({"gate", gradcheck([&](const auto& p) { return project(ad::gate(p[0], p[1], 2), c); }, {x, w})});
  }
  return out;
}

// stem conv -> relu -> pool -> conv -> relu -> global pool -> linear -> cross entropy
inline double composed_gradcheck(std::uint64_t seed) {
  Rng rng(seed);
  auto x = ad::Value::constant({2, 1, 6, 6}, uniform(72, rng));
  std::vector<ad::Value> p{param({2, 1, 5, 5}, rng), param({2}, rng), param({3, 2, 5, 5}, rng),
                           param({3}, rng), param({2, 3}, rng), param({2}, rng)};
  for (auto& v : p)
    for (auto& e : v.mutable_data()) e *= 0.5;
  const std::vector<int> labels{1, 0};
  return gradcheck(
      [&](const std::vector<ad::Value>& q) {
        auto h = ad::relu(ad::conv2d(x, q[0], q[1]));
        h = ad::max_pool2d(h);
        h = ad::relu(ad::conv2d(h, q[2], q[3]));
        return ad::cross_entropy(ad::linear(ad::global_avg_pool(h), q[4], q[5]), labels);
      },
      p);
}

}  // namespace fade::testing
