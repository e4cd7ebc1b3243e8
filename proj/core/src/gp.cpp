#include "fade/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "fade/error.hpp"

namespace fade::search {

struct GaussianProcess::Fit {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd weights;  // K^-1 (y - mean) / scale
  double y_mean = 0.0;
  double y_scale = 1.0;
  double length_scale = 0.0;
};

namespace {

struct Standardised {
  Eigen::VectorXd y;
  double mean = 0.0;
  double scale = 1.0;
};

Standardised standardise(const std::vector<double>& ys) {
  Standardised s;
  const auto n = static_cast<Eigen::Index>(ys.size());
  for (double v : ys) s.mean += v;
  s.mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : ys) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(n);
  s.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  s.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.y(i) = (ys[i] - s.mean) / s.scale;
  return s;
}

// Cholesky of K + jitter*I, growing the jitter until it succeeds.
bool factor(const Eigen::MatrixXd& K, double noise, Eigen::LLT<Eigen::MatrixXd>& llt) {
  double jitter = noise;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += jitter;
    llt.compute(A);
    if (llt.info() == Eigen::Success) return true;
    jitter = std::max(jitter * 10.0, 1e-10);
  }
  return false;
}

}  // namespace

GaussianProcess::GaussianProcess(GpConfig config) : config_(config) {
  if (!(config_.length_scale > 0.0) || !(config_.signal_variance > 0.0) || config_.noise_variance < 0.0)
    throw ConfigError("gaussian process hyperparameters must be positive");
  if (config_.fit_length_scale &&
      !(config_.min_length_scale > 0.0 && config_.max_length_scale >= config_.min_length_scale))
    throw ConfigError("gaussian process length-scale bounds are invalid");
}

GaussianProcess::~GaussianProcess() = default;
GaussianProcess::GaussianProcess(GaussianProcess&&) noexcept = default;
GaussianProcess& GaussianProcess::operator=(GaussianProcess&&) noexcept = default;

double GaussianProcess::kernel_at(const graph::FeaturePoint& a, const graph::FeaturePoint& b, double ls) const {
  double d2 = 0.0;
  for (std::size_t k = 0; k < graph::kFeatureDims; ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
  return config_.signal_variance * std::exp(-0.5 * d2 / (ls * ls));
}

double GaussianProcess::kernel(const graph::FeaturePoint& a, const graph::FeaturePoint& b) const {
  return kernel_at(a, b, length_scale());
}

double GaussianProcess::length_scale() const {
  if (xs_.empty()) return config_.length_scale;
  if (!fit_) refit();
  return fit_->length_scale;
}

void GaussianProcess::add(const graph::FeaturePoint& x, double y) {
  if (!std::isfinite(y)) throw NumericError("gaussian process observation is not finite");
  xs_.push_back(x);
  ys_.push_back(y);
  fit_.reset();
}

double GaussianProcess::log_marginal_likelihood(double ls) const {
  if (xs_.empty()) throw ConfigError("log marginal likelihood needs observations");
  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = kernel_at(xs_[i], xs_[j], ls);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!factor(K, config_.noise_variance, llt))
    throw NumericError("gaussian process kernel matrix is not positive definite after jitter retries");
  const auto s = standardise(ys_);
  const Eigen::VectorXd a = llt.solve(s.y);
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * s.y.dot(a) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

void GaussianProcess::refit() const {
  double ls = config_.length_scale;
  if (config_.fit_length_scale && xs_.size() >= config_.fit_after) {
    constexpr int kGrid = 25;
    double best = -std::numeric_limits<double>::infinity();
    const double lo = std::log(config_.min_length_scale), hi = std::log(config_.max_length_scale);
    for (int g = 0; g < kGrid; ++g) {
      const double cand = std::exp(lo + (hi - lo) * g / (kGrid - 1));
      const double lml = log_marginal_likelihood(cand);
      if (lml > best) best = lml, ls = cand;
    }
  }

  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = kernel_at(xs_[i], xs_[j], ls);
  auto fit = std::make_unique<Fit>();
  if (!factor(K, config_.noise_variance, fit->llt))
    throw NumericError("gaussian process kernel matrix is not positive definite after jitter retries");
  const auto s = standardise(ys_);
  fit->y_mean = s.mean;
  fit->y_scale = s.scale;
  fit->length_scale = ls;
  fit->weights = fit->llt.solve(s.y);
  fit_ = std::move(fit);
}

GpPrediction GaussianProcess::predict(const graph::FeaturePoint& x) const {
  if (xs_.empty()) return {0.0, std::sqrt(config_.signal_variance)};
  if (!fit_) refit();
  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel_at(xs_[i], x, fit_->length_scale);
  const double mean = fit_->y_mean + fit_->y_scale * k.dot(fit_->weights);
  const Eigen::VectorXd v = fit_->llt.matrixL().solve(k);
  const double var = std::max(0.0, config_.signal_variance - v.squaredNorm());
  return {mean, fit_->y_scale * std::sqrt(var)};
}

double GaussianProcess::ucb(const graph::FeaturePoint& x) const {
  const auto p = predict(x);
  return p.mean + config_.kappa * p.stddev;
}

std::vector<graph::FeaturePoint> candidate_lattice(std::size_t per_dim) {
  if (per_dim < 1) throw ConfigError("candidate lattice needs at least one point per axis");
  std::vector<graph::FeaturePoint> out;
  const double step = per_dim > 1 ? 1.0 / static_cast<double>(per_dim - 1) : 0.0;
  for (std::size_t a = 0; a < per_dim; ++a)
    for (std::size_t b = 0; b < per_dim; ++b)
      for (std::size_t c = 0; c < per_dim; ++c)
        out.push_back({{static_cast<double>(a) * step, static_cast<double>(b) * step, static_cast<double>(c) * step}});
  return out;
}

}  // namespace fade::search
