#pragma once

// Optimizer, initialization and noise primitives used by training.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/random.hpp"

namespace fade::ad {

// Defaults are the constants used for all reported experiments; note the
// unusual beta values. {0.9, 0.999} is the textbook setting.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.1;
  double beta2 = 1e-3;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(std::size_t size, AdamConfig cfg)
      : first_moment(size, 0.0), second_moment(size, 0.0), config(cfg) {}
};

// One bias-corrected Adam step with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state);

// Steps every parameter that received a gradient since its last zero_grad().
class Adam {
 public:
  Adam(std::vector<Value> params, AdamConfig config);

  void step();
  void zero_grad();
  const std::vector<Value>& params() const { return params_; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  std::vector<Value> params_;
  std::vector<AdamState> states_;
};

// Clamps every gradient entry into [-clip_value, clip_value].
void clip_gradients(std::span<Value> params, double clip_value);

// Zero-mean normal with variance 2 / fan_in.
std::vector<double> kaiming_init(std::size_t count, std::size_t fan_in, Rng& rng);

// Standard Gumbel draws -log(-log(u)), u uniform with both tails clamped.
std::vector<double> gumbel_sample(std::size_t count, Rng& rng);

}  // namespace fade::ad
