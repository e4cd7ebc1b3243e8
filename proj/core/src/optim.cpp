#include "fade/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fade/error.hpp"

namespace fade::ad {

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state) {
  if (param.size() != grad.size() || state.first_moment.size() != param.size() ||
      state.second_moment.size() != param.size())
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grad[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    param[i] -= c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * param[i]);
  }
}

Adam::Adam(std::vector<Value> params, AdamConfig config) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (const auto& p : params_) states_.emplace_back(p.size(), config);
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    adam_step(params_[i].mutable_data(), params_[i].grad(), states_[i]);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void clip_gradients(std::span<Value> params, double clip_value) {
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.mutable_grad()) g = std::clamp(g, -clip_value, clip_value);
  }
}

std::vector<double> kaiming_init(std::size_t count, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("kaiming_init: fan_in must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<double> gumbel_sample(std::size_t count, Rng& rng) {
  constexpr double kTail = 1e-12;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> out(count);
  for (auto& v : out) {
    const double u = std::clamp(uni(rng), kTail, 1.0 - kTail);
    v = -std::log(-std::log(u));
  }
  return out;
}

}  // namespace fade::ad
