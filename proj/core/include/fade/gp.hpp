#pragma once

// Exact Gaussian-process regression on [0,1]^3 with a squared-exponential
// kernel; backs the UCB baseline.

#include <cstddef>
#include <memory>
#include <vector>

#include "fade/graph_space.hpp"

namespace fade::search {

struct GpConfig {
  double length_scale = 0.2;
  double signal_variance = 1.0;
  double noise_variance = 1e-3;
  double kappa = 2.5;
  double xi = 0.0;  // recorded for parity with the usual UCB utility; UCB itself ignores it
  std::size_t lattice_per_dim = 9;
  // Type-II maximum likelihood over a log grid of length scales once
  // `fit_after` observations exist; length_scale is used before that.
  bool fit_length_scale = true;
  std::size_t fit_after = 3;
  double min_length_scale = 0.05;
  double max_length_scale = 2.0;
};

struct GpPrediction {
  double mean = 0.0;
  double stddev = 0.0;
};

class GaussianProcess {
 public:
  explicit GaussianProcess(GpConfig config);
  ~GaussianProcess();
  GaussianProcess(GaussianProcess&&) noexcept;
  GaussianProcess& operator=(GaussianProcess&&) noexcept;

  void add(const graph::FeaturePoint& x, double y);
  std::size_t size() const { return xs_.size(); }

  // Posterior of the latent function; observations are standardised
  // (centred, scaled to unit variance) before fitting.
  GpPrediction predict(const graph::FeaturePoint& x) const;
  double ucb(const graph::FeaturePoint& x) const;

  double kernel(const graph::FeaturePoint& a, const graph::FeaturePoint& b) const;
  // Length scale of the current fit.
  double length_scale() const;
  // Log marginal likelihood of the standardised observations at `length_scale`.
  double log_marginal_likelihood(double length_scale) const;

 private:
  void refit() const;
  double kernel_at(const graph::FeaturePoint& a, const graph::FeaturePoint& b, double length_scale) const;

  GpConfig config_;
  std::vector<graph::FeaturePoint> xs_;
  std::vector<double> ys_;
  struct Fit;
  mutable std::unique_ptr<Fit> fit_;
};

// Regular lattice with `per_dim` points per axis, lexicographic order.
std::vector<graph::FeaturePoint> candidate_lattice(std::size_t per_dim);

}  // namespace fade::search
