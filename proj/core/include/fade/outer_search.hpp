#pragma once

// Anchor-based pseudo-gradient search over the feature space, plus the
// random-search and GP-UCB baselines that share its evaluation routine.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fade/darts_train.hpp"
#include "fade/data.hpp"
#include "fade/gp.hpp"
#include "fade/graph_space.hpp"
#include "fade/hyperarch.hpp"
#include "fade/random.hpp"

namespace fade::search {

using graph::FeaturePoint;

// Anchor plus one positive and one negative offset per feature axis.
inline constexpr std::size_t kRowWidth = 2 * graph::kFeatureDims + 1;

enum class StepSign { kAscent, kDescentAsWritten };

using BetaMatrix = std::vector<std::vector<double>>;

struct AnchorState {
  std::vector<FeaturePoint> anchors;
  double gamma = 0.125;
  double lambda = 0.25;
  std::size_t outer_epoch = 0;
};

// Member order: anchor, +e1, -e1, +e2, -e2, +e3, -e3; each clamped to [0,1]^3.
std::array<FeaturePoint, kRowWidth> source_points(const FeaturePoint& anchor, double gamma);

struct RowProposal {
  std::vector<FeaturePoint> sources;
  std::vector<graph::Dag> members;
};

RowProposal propose_row(const FeaturePoint& anchor, double gamma, const graph::FeatureGrid& grid, Rng& rng);

/// M' = M + s * lambda * sum_k e_k (beta(+e_k) - beta(-e_k)) clamped to [0,1]^3,
/// with s = +1 for ascent and -1 for the literal descent sign.
FeaturePoint update_anchor(const FeaturePoint& anchor, std::span<const double> beta, double lambda,
                           StepSign sign = StepSign::kAscent);

// Supplies beta (one row of kRowWidth values per cell) for a set of proposed rows.
class BetaSource {
 public:
  virtual ~BetaSource() = default;
  virtual BetaMatrix evaluate(const std::vector<RowProposal>& rows, Rng& rng) = 0;
};

// Oracle mode: beta per row is softmax(f(cell, source) / temperature).
class OracleBetaSource : public BetaSource {
 public:
  using CellOracle = std::function<double(std::size_t cell, const FeaturePoint&)>;

  explicit OracleBetaSource(CellOracle oracle, double temperature = 0.05);
  BetaMatrix evaluate(const std::vector<RowProposal>& rows, Rng& rng) override;

 private:
  CellOracle oracle_;
  double temperature_;
};

struct NeuralSearchSettings {
  arch::ArchConfig arch;
  train::TrainConfig train;  // train.epochs is the inner epoch count
  train::RegSchedule schedule;
  bool carry_weights = true;
};

// Neural mode: assembles H from the rows, trains it for the inner epochs and
// reads beta from the resulting softmaxed alpha.
class DartsBetaSource : public BetaSource {
 public:
  DartsBetaSource(const data::DatasetSplits& splits, NeuralSearchSettings settings,
                  train::TrainLogger logger = {});
  BetaMatrix evaluate(const std::vector<RowProposal>& rows, Rng& rng) override;

  const arch::HyperArchitecture* last() const { return previous_.get(); }
  std::size_t carried_tensors() const { return carried_; }

 private:
  const data::DatasetSplits& splits_;
  NeuralSearchSettings settings_;
  train::TrainLogger logger_;
  std::unique_ptr<arch::HyperArchitecture> previous_;
  std::size_t carried_ = 0;
};

struct Evaluation {
  double median = 0.0;
  std::vector<double> values;
  std::vector<std::vector<graph::Dag>> architectures;  // one chain per repeat; empty for oracles
};

double median(std::vector<double> values);

using PointEvaluator = std::function<Evaluation(const std::vector<FeaturePoint>&, Rng&)>;

struct EvalSettings {
  arch::ArchConfig arch;
  train::TrainConfig train;
  std::size_t repeats = 5;
  std::size_t epochs = 10;
};

/// Generates one chain per repeat from the per-cell points, trains it from
/// scratch and reports the median test accuracy.
Evaluation evaluate_point(const std::vector<FeaturePoint>& points, const graph::FeatureGrid& grid,
                          const data::DatasetSplits& splits, const EvalSettings& settings, Rng& rng);

// Deterministic evaluator: mean over cells of f(point).
PointEvaluator oracle_evaluator(std::function<double(const FeaturePoint&)> f);

struct SearchConfig {
  std::size_t depth = 2;
  std::size_t outer_epochs = 100;
  double gamma = 0.125;
  double lambda = 0.25;
  StepSign sign = StepSign::kAscent;
  // Evaluate on the first, final and every eval_every-th epoch; 0 disables.
  std::size_t eval_every = 5;
  std::vector<FeaturePoint> initial_anchors;  // empty: uniform in [0,1]^3
};

struct EpochRecord {
  std::size_t outer_epoch = 0;        // 1-based
  std::vector<FeaturePoint> anchors;  // anchors the rows were proposed from
  std::vector<RowProposal> rows;
  BetaMatrix beta;
  std::optional<Evaluation> evaluation;  // of `anchors`
};

struct Trajectory {
  std::vector<EpochRecord> epochs;
  std::vector<FeaturePoint> final_anchors;
  std::size_t size() const { return epochs.size(); }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

bool evaluates_epoch(const SearchConfig& config, std::size_t outer_epoch);

Trajectory run_search(const SearchConfig& config, const graph::FeatureGrid& grid, BetaSource& beta, Rng& rng,
                      const PointEvaluator& evaluator = {}, const EpochCallback& on_epoch = {});

struct BaselineRecord {
  std::size_t epoch = 0;  // 1-based
  std::vector<FeaturePoint> points;
  Evaluation evaluation;
};

struct BaselineHistory {
  std::string method;
  std::vector<BaselineRecord> records;
  // Index of the first record with the highest median.
  std::size_t best() const;
};

using BaselineCallback = std::function<void(const BaselineRecord&)>;

BaselineHistory random_search(std::size_t depth, std::size_t budget, const PointEvaluator& evaluator, Rng& rng,
                              const BaselineCallback& on_record = {});

/// One independent GP per cell; every cell's GP observes the shared median.
BaselineHistory bo_ucb(std::size_t depth, std::size_t budget, const GpConfig& gp, const PointEvaluator& evaluator,
                       Rng& rng, const BaselineCallback& on_record = {});

}  // namespace fade::search
