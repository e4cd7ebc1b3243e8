#include "fade/darts_train.hpp"

#include <algorithm>
#include <numeric>

#include "fade/error.hpp"
#include "fade/interrupt.hpp"

namespace fade::train {
namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::size_t limit,
                                                   Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    if (limit && batches.size() == limit) break;
  }
  return batches;
}

void check_config(const TrainConfig& c) {
  if (c.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(c.clip_value > 0.0)) throw ConfigError("clip_value must be > 0");
  if (!(c.alpha_lr >= 0.0)) throw ConfigError("alpha_lr must be >= 0");
}

// Enables gradients for `params` for the lifetime of the guard only.
class TrainableGuard {
 public:
  TrainableGuard(std::vector<ad::Value> params, bool on) : params_(std::move(params)) {
    for (auto& p : params_) {
      previous_.push_back(p.requires_grad());
      p.set_requires_grad(on);
    }
  }
  ~TrainableGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
  }
  TrainableGuard(const TrainableGuard&) = delete;
  TrainableGuard& operator=(const TrainableGuard&) = delete;

 private:
  std::vector<ad::Value> params_;
  std::vector<bool> previous_;
};

}  // namespace

double RegSchedule::zero_crossing(std::size_t cell) const {
  return static_cast<double>(total_epochs) * static_cast<double>(cell + 1) / static_cast<double>(depth + 1);
}

double reg_factor(std::size_t epoch, std::size_t cell, const RegSchedule& s) {
  if (s.total_epochs == 0) throw ConfigError("regularization schedule needs total_epochs >= 1");
  if (epoch >= s.total_epochs)
    throw BoundsError("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(s.total_epochs));
  if (cell >= s.depth) throw BoundsError("cell " + std::to_string(cell) + " outside depth " + std::to_string(s.depth));
  const double e = static_cast<double>(epoch);
  if (s.mode == RegMode::kCellIndependent)
    return s.r_start + (s.r_end - s.r_start) * e / static_cast<double>(s.total_epochs);
  if (s.r_start == 0.0 && s.r_end == 0.0) return 0.0;
  if (!(s.r_start > 0.0 && s.r_end <= 0.0))
    throw ConfigError("cell-dependent regularization needs r_start > 0 >= r_end");
  const double slope = s.r_start / s.zero_crossing(cell);
  return std::max(s.r_end, s.r_start - slope * e);
}

std::vector<double> reg_factors(std::size_t epoch, const RegSchedule& s) {
  std::vector<double> r(s.depth);
  for (std::size_t i = 0; i < s.depth; ++i) r[i] = reg_factor(epoch, i, s);
  return r;
}

double alpha_step(arch::HyperArchitecture& h, const ad::Value& batch, std::span<const int> labels,
                  std::span<const double> r, double lr, double clip_value, Rng& rng, double loss_scale) {
  if (r.size() != h.depth()) throw ShapeError("alpha_step: one regularization factor per row required");
  ad::Value raw = h.alpha().raw;
  TrainableGuard frozen(h.weight_parameters(), false);
  TrainableGuard active({raw}, true);
  raw.zero_grad();

  auto result = h.forward(batch, arch::ForwardMode::kGumbelHard, rng);
  std::vector<ad::Value> terms{ad::scale(ad::cross_entropy(result.logits, labels), loss_scale)};
  for (std::size_t i = 0; i < h.depth(); ++i)
    if (r[i] != 0.0) terms.push_back(ad::scale(ad::max_norm(result.row_gates[i]), r[i]));
  ad::Value objective = ad::add_n(terms);
  objective.backward();

  if (raw.has_grad()) {
    std::vector<ad::Value> params{raw};
    ad::clip_gradients(params, clip_value);
    auto data = raw.mutable_data();
    const auto grad = raw.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
    ad::check_finite(raw.data(), "alpha_step");
  }
  raw.zero_grad();
  return objective.item();
}

double weight_step(arch::HyperArchitecture& h, ad::Adam& optimizer, const ad::Value& batch,
                   std::span<const int> labels, double clip_value, Rng& rng) {
  TrainableGuard frozen({h.alpha().raw}, false);
  TrainableGuard active(h.weight_parameters(), true);
  optimizer.zero_grad();
  auto result = h.forward(batch, arch::ForwardMode::kGumbelHard, rng);
  ad::Value loss = ad::cross_entropy(result.logits, labels);
  loss.backward();
  auto params = h.weight_parameters();
  ad::clip_gradients(params, clip_value);
  optimizer.step();
  optimizer.zero_grad();
  return loss.item();
}

AlphaMatrix HyperTrainResult::final_alpha(std::size_t k) const {
  if (alpha_history.empty()) throw ConfigError("no alpha snapshots recorded");
  k = std::clamp<std::size_t>(k, 1, alpha_history.size());
  AlphaMatrix mean = alpha_history.back();
  for (auto& row : mean) std::fill(row.begin(), row.end(), 0.0);
  for (std::size_t s = alpha_history.size() - k; s < alpha_history.size(); ++s)
    for (std::size_t i = 0; i < mean.size(); ++i)
      for (std::size_t j = 0; j < mean[i].size(); ++j) mean[i][j] += alpha_history[s][i][j] / static_cast<double>(k);
  return mean;
}

HyperTrainResult train_hyperarch(arch::HyperArchitecture& h, const data::DatasetSplits& splits,
                                 const TrainConfig& config, const RegSchedule& schedule, Rng& rng,
                                 const TrainLogger& logger) {
  check_config(config);
  if (splits.weight_train.size() == 0 || splits.arch_train.size() == 0)
    throw ConfigError("hyper-architecture training needs non-empty weight_train and arch_train splits");
  if (schedule.depth != h.depth()) throw ConfigError("regularization schedule depth does not match the hyper-architecture");

  ad::Adam optimizer(h.weight_parameters(), config.adam);
  HyperTrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (interrupt_requested()) break;
    const auto r = reg_factors(std::min(epoch, schedule.total_epochs - 1), schedule);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& idx : make_batches(splits.weight_train.size(), config.batch_size,
                                        config.weight_batches_per_epoch, rng)) {
      auto batch = splits.weight_train.batch(idx);
      auto labels = splits.weight_train.batch_labels(idx);
      loss_sum += weight_step(h, optimizer, batch, labels, config.clip_value, rng);
      ++steps;
    }
    if (logger) logger({epoch, "weights", loss_sum / static_cast<double>(steps), r, h.alpha().softmaxed()});

    loss_sum = 0.0;
    steps = 0;
    for (const auto& idx :
         make_batches(splits.arch_train.size(), config.batch_size, config.arch_batches_per_epoch, rng)) {
      auto batch = splits.arch_train.batch(idx);
      auto labels = splits.arch_train.batch_labels(idx);
      loss_sum += alpha_step(h, batch, labels, r, config.alpha_lr, config.clip_value, rng);
      ++steps;
    }
    auto snapshot = h.alpha().softmaxed();
    if (logger) logger({epoch, "alpha", loss_sum / static_cast<double>(steps), r, snapshot});
    result.alpha_history.push_back(std::move(snapshot));
    result.completed_epochs = epoch + 1;
  }
  return result;
}

double accuracy(const arch::DiscreteNetwork& net, const data::LabeledSet& set, std::size_t batch_size) {
  if (set.size() == 0) throw ConfigError("accuracy on an empty set");
  TrainableGuard frozen(net.parameters(), false);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    auto logits = net.forward(set.batch(idx));
    const std::size_t K = logits.dim(1);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      auto row = logits.data().subspan(n * K, K);
      if (static_cast<int>(ad::argmax(row)) == set.labels[idx[n]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

double train_discrete(arch::DiscreteNetwork& net, const data::DatasetSplits& splits, std::size_t epochs,
                      const TrainConfig& config, Rng& rng) {
  check_config(config);
  if (epochs < 1) throw ConfigError("train_discrete needs epochs >= 1");
  const data::LabeledSet train = data::concat(splits.arch_train, splits.weight_train);
  if (train.size() == 0 || splits.test.size() == 0) throw ConfigError("train_discrete needs train and test samples");
  ad::Adam optimizer(net.parameters(), config.adam);
  auto params = net.parameters();
  TrainableGuard active(params, true);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    if (interrupt_requested()) break;
    for (const auto& idx : make_batches(train.size(), config.batch_size, 0, rng)) {
      optimizer.zero_grad();
      ad::Value loss = ad::cross_entropy(net.forward(train.batch(idx)), train.batch_labels(idx));
      loss.backward();
      ad::clip_gradients(params, config.clip_value);
      optimizer.step();
    }
  }
  optimizer.zero_grad();
  return accuracy(net, splits.test);
}

}  // namespace fade::train
