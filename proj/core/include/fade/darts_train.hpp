#pragma once

// First-order bi-level training of a hyper-architecture and from-scratch
// training of discrete networks.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fade/data.hpp"
#include "fade/hyperarch.hpp"
#include "fade/optim.hpp"
#include "fade/random.hpp"

namespace fade::train {

enum class RegMode { kCellIndependent, kCellDependent };

/// Regularization factor r over epochs. Cell-independent: one linear ramp
/// from r_start to r_end. Cell-dependent: per-cell ramps from r_start that
/// cross zero at epoch T*(i+1)/(d+1) for 0-based cell i and stop at r_end, so
/// shallow cells are regularized towards sharpening first.
struct RegSchedule {
  RegMode mode = RegMode::kCellIndependent;
  double r_start = 0.0;
  double r_end = 0.0;
  std::size_t total_epochs = 1;
  std::size_t depth = 1;

  double zero_crossing(std::size_t cell) const;
};

double reg_factor(std::size_t epoch, std::size_t cell, const RegSchedule& schedule);
std::vector<double> reg_factors(std::size_t epoch, const RegSchedule& schedule);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  double clip_value = 10.0;
  ad::AdamConfig adam;
  double alpha_lr = 0.01;
  // 0 means one full pass over the split per epoch.
  std::size_t weight_batches_per_epoch = 0;
  std::size_t arch_batches_per_epoch = 0;
  // Averaging window for the alpha snapshot handed to ranking (1 = final epoch).
  std::size_t alpha_average_last = 1;
};

using AlphaMatrix = std::vector<std::vector<double>>;

struct TrainLogRow {
  std::size_t epoch = 0;
  std::string phase;  // "weights" or "alpha"
  double loss = 0.0;
  std::vector<double> r;
  AlphaMatrix alpha;
};

using TrainLogger = std::function<void(const TrainLogRow&)>;

// One step on alpha' with the weights frozen: descends
//   loss_scale * CE + sum_i r_i * ||gate_i||_inf
// with a plain constant learning rate after clipping. Returns the objective.
double alpha_step(arch::HyperArchitecture& h, const ad::Value& batch, std::span<const int> labels,
                  std::span<const double> r, double lr, double clip_value, Rng& rng, double loss_scale = 1.0);

// One Adam step on the weights with alpha' frozen. Returns the loss.
double weight_step(arch::HyperArchitecture& h, ad::Adam& optimizer, const ad::Value& batch,
                   std::span<const int> labels, double clip_value, Rng& rng);

struct HyperTrainResult {
  std::vector<AlphaMatrix> alpha_history;  // softmaxed alpha after each epoch
  std::size_t completed_epochs = 0;

  // Mean over the last `k` snapshots (k clamped to the history length).
  AlphaMatrix final_alpha(std::size_t k = 1) const;
};

/// Alternates, per epoch, a weight phase on weight_train (alpha frozen) and an
/// alpha phase on arch_train (weights frozen). `optimizer` may be supplied to
/// keep Adam moments across calls; otherwise a fresh one is used.
HyperTrainResult train_hyperarch(arch::HyperArchitecture& h, const data::DatasetSplits& splits,
                                 const TrainConfig& config, const RegSchedule& schedule, Rng& rng,
                                 const TrainLogger& logger = {});

double accuracy(const arch::DiscreteNetwork& net, const data::LabeledSet& set, std::size_t batch_size = 256);

/// Trains on arch_train + weight_train for `epochs` epochs with Adam and
/// returns the test accuracy.
double train_discrete(arch::DiscreteNetwork& net, const data::DatasetSplits& splits, std::size_t epochs,
                      const TrainConfig& config, Rng& rng);

}  // namespace fade::train
