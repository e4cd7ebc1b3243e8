#include "fade/outer_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fade/error.hpp"
#include "fade/interrupt.hpp"

namespace fade::search {
namespace {

FeaturePoint uniform_point(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeaturePoint p;
  for (std::size_t k = 0; k < graph::kFeatureDims; ++k) p[k] = u(rng);
  return p;
}

void check_evaluation(const Evaluation& e) {
  if (!std::isfinite(e.median)) throw NumericError("evaluation produced a non-finite value");
}

}  // namespace

std::array<FeaturePoint, kRowWidth> source_points(const FeaturePoint& anchor, double gamma) {
  std::array<FeaturePoint, kRowWidth> out;
  out[0] = graph::clamp_unit(anchor);
  for (std::size_t k = 0; k < graph::kFeatureDims; ++k) {
    FeaturePoint plus = anchor, minus = anchor;
    plus[k] += gamma;
    minus[k] -= gamma;
    out[1 + 2 * k] = graph::clamp_unit(plus);
    out[2 + 2 * k] = graph::clamp_unit(minus);
  }
  return out;
}

RowProposal propose_row(const FeaturePoint& anchor, double gamma, const graph::FeatureGrid& grid, Rng& rng) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (grid.graph_count() == 0) throw ConfigError("cannot propose rows from an empty feature grid");
  RowProposal row;
  for (const auto& p : source_points(anchor, gamma)) {
    row.sources.push_back(p);
    row.members.push_back(graph::generate(p, grid, rng));
  }
  return row;
}

FeaturePoint update_anchor(const FeaturePoint& anchor, std::span<const double> beta, double lambda,
                           StepSign sign) {
  if (beta.size() != kRowWidth)
    throw ShapeError("update_anchor expects " + std::to_string(kRowWidth) + " beta values");
  const double s = sign == StepSign::kAscent ? 1.0 : -1.0;
  FeaturePoint next = anchor;
  for (std::size_t k = 0; k < graph::kFeatureDims; ++k) next[k] += s * lambda * (beta[1 + 2 * k] - beta[2 + 2 * k]);
  return graph::clamp_unit(next);
}

OracleBetaSource::OracleBetaSource(CellOracle oracle, double temperature)
    : oracle_(std::move(oracle)), temperature_(temperature) {
  if (!(temperature_ > 0.0)) throw ConfigError("oracle temperature must be > 0");
}

BetaMatrix OracleBetaSource::evaluate(const std::vector<RowProposal>& rows, Rng&) {
  BetaMatrix beta;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> logits;
    for (const auto& p : rows[i].sources) logits.push_back(oracle_(i, p) / temperature_);
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - top));
    for (auto& l : logits) l /= z;
    beta.push_back(std::move(logits));
  }
  return beta;
}

DartsBetaSource::DartsBetaSource(const data::DatasetSplits& splits, NeuralSearchSettings settings,
                                 train::TrainLogger logger)
    : splits_(splits), settings_(std::move(settings)), logger_(std::move(logger)) {}

BetaMatrix DartsBetaSource::evaluate(const std::vector<RowProposal>& rows, Rng& rng) {
  std::vector<std::vector<graph::Dag>> members;
  for (const auto& r : rows) members.push_back(r.members);
  auto h = std::make_unique<arch::HyperArchitecture>(settings_.arch, members, rng);
  carried_ = 0;
  if (settings_.carry_weights && previous_) carried_ = h->carry_weights_from(*previous_);
  auto schedule = settings_.schedule;
  schedule.depth = h->depth();
  schedule.total_epochs = std::max<std::size_t>(1, settings_.train.epochs);
  const auto result = train::train_hyperarch(*h, splits_, settings_.train, schedule, rng, logger_);
  if (result.completed_epochs == 0) throw Error("hyper-architecture training was interrupted before one epoch");
  previous_ = std::move(h);
  return result.final_alpha(settings_.train.alpha_average_last);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Evaluation evaluate_point(const std::vector<FeaturePoint>& points, const graph::FeatureGrid& grid,
                          const data::DatasetSplits& splits, const EvalSettings& settings, Rng& rng) {
  if (settings.repeats < 1) throw ConfigError("evaluation needs repeats >= 1");
  if (points.empty()) throw ConfigError("evaluation needs at least one cell point");
  Evaluation out;
  for (std::size_t r = 0; r < settings.repeats; ++r) {
    std::vector<graph::Dag> cells;
    for (const auto& p : points) cells.push_back(graph::generate(p, grid, rng));
    arch::DiscreteNetwork net(settings.arch, cells, rng);
    out.values.push_back(train::train_discrete(net, splits, settings.epochs, settings.train, rng));
    out.architectures.push_back(std::move(cells));
  }
  out.median = median(out.values);
  return out;
}

PointEvaluator oracle_evaluator(std::function<double(const FeaturePoint&)> f) {
  return [f = std::move(f)](const std::vector<FeaturePoint>& points, Rng&) {
    if (points.empty()) throw ConfigError("evaluation needs at least one cell point");
    double s = 0.0;
    for (const auto& p : points) s += f(p);
    Evaluation e;
    e.median = s / static_cast<double>(points.size());
    e.values = {e.median};
    return e;
  };
}

bool evaluates_epoch(const SearchConfig& config, std::size_t outer_epoch) {
  if (config.eval_every == 0) return false;
  return outer_epoch == 1 || outer_epoch == config.outer_epochs || outer_epoch % config.eval_every == 0;
}

Trajectory run_search(const SearchConfig& config, const graph::FeatureGrid& grid, BetaSource& beta, Rng& rng,
                      const PointEvaluator& evaluator, const EpochCallback& on_epoch) {
  if (config.depth < 1) throw ConfigError("search depth must be >= 1");
  if (!(config.gamma > 0.0)) throw ConfigError("gamma must be > 0");
  if (!(config.lambda > 0.0)) throw ConfigError("lambda must be > 0");
  AnchorState state{config.initial_anchors, config.gamma, config.lambda, 0};
  if (state.anchors.empty())
    for (std::size_t i = 0; i < config.depth; ++i) state.anchors.push_back(uniform_point(rng));
  if (state.anchors.size() != config.depth) throw ConfigError("initial anchors must match the search depth");
  for (auto& a : state.anchors) a = graph::clamp_unit(a);

  Trajectory trajectory;
  for (std::size_t t = 1; t <= config.outer_epochs; ++t) {
    if (interrupt_requested()) break;
    EpochRecord record;
    record.outer_epoch = t;
    record.anchors = state.anchors;
    for (const auto& a : state.anchors) record.rows.push_back(propose_row(a, state.gamma, grid, rng));
    record.beta = beta.evaluate(record.rows, rng);
    if (record.beta.size() != config.depth) throw ShapeError("beta source returned the wrong number of rows");
    if (interrupt_requested()) break;
    if (evaluator && evaluates_epoch(config, t)) {
      record.evaluation = evaluator(record.anchors, rng);
      check_evaluation(*record.evaluation);
    }
    for (std::size_t i = 0; i < config.depth; ++i)
      state.anchors[i] = update_anchor(state.anchors[i], record.beta[i], state.lambda, config.sign);
    state.outer_epoch = t;
    if (on_epoch) on_epoch(record);
    trajectory.epochs.push_back(std::move(record));
  }
  trajectory.final_anchors = state.anchors;
  return trajectory;
}

std::size_t BaselineHistory::best() const {
  if (records.empty()) throw ConfigError("empty baseline history");
  std::size_t b = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].evaluation.median > records[b].evaluation.median) b = i;
  return b;
}

BaselineHistory random_search(std::size_t depth, std::size_t budget, const PointEvaluator& evaluator, Rng& rng,
                              const BaselineCallback& on_record) {
  if (budget < 1) throw ConfigError("baseline budget must be >= 1");
  if (depth < 1) throw ConfigError("baseline depth must be >= 1");
  BaselineHistory history{"rs", {}};
  for (std::size_t t = 1; t <= budget; ++t) {
    if (interrupt_requested()) break;
    BaselineRecord rec;
    rec.epoch = t;
    for (std::size_t i = 0; i < depth; ++i) rec.points.push_back(uniform_point(rng));
    rec.evaluation = evaluator(rec.points, rng);
    check_evaluation(rec.evaluation);
    if (on_record) on_record(rec);
    history.records.push_back(std::move(rec));
  }
  return history;
}

BaselineHistory bo_ucb(std::size_t depth, std::size_t budget, const GpConfig& gp, const PointEvaluator& evaluator,
                       Rng& rng, const BaselineCallback& on_record) {
  if (budget < 1) throw ConfigError("baseline budget must be >= 1");
  if (depth < 1) throw ConfigError("baseline depth must be >= 1");
  const auto lattice = candidate_lattice(gp.lattice_per_dim);
  std::vector<GaussianProcess> models;
  for (std::size_t i = 0; i < depth; ++i) models.emplace_back(gp);

  BaselineHistory history{"bo", {}};
  for (std::size_t t = 1; t <= budget; ++t) {
    if (interrupt_requested()) break;
    BaselineRecord rec;
    rec.epoch = t;
    for (const auto& model : models) {
      std::size_t pick = 0;
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < lattice.size(); ++c) {
        const double u = model.ucb(lattice[c]);
        if (u > top) top = u, pick = c;
      }
      rec.points.push_back(lattice[pick]);
    }
    rec.evaluation = evaluator(rec.points, rng);
    check_evaluation(rec.evaluation);
    for (std::size_t i = 0; i < depth; ++i) models[i].add(rec.points[i], rec.evaluation.median);
    if (on_record) on_record(rec);
    history.records.push_back(std::move(rec));
  }
  return history;
}

}  // namespace fade::search
