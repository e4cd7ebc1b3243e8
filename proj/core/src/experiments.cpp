#include "fade/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fade/darts_train.hpp"
#include "fade/error.hpp"
#include "fade/interrupt.hpp"
#include "fade/results.hpp"

namespace fade::exp {
namespace {

Rng stream(std::uint64_t seed, std::uint64_t s) { return Rng(derive_seed(seed, s)); }

class Manifest {
 public:
  Manifest(const std::filesystem::path& dir, std::string command, const ExperimentConfig& cfg, std::uint64_t seed)
      : dir_(dir) {
    m_.command = std::move(command);
    m_.version = results::library_version();
    m_.config = cfg;
    m_.seeds = {seed};
    m_.started = results::utc_timestamp();
  }
  bool enabled() const { return !dir_.empty(); }
  std::filesystem::path file(const std::string& name) {
    m_.artifacts.push_back(name);
    return dir_ / name;
  }
  void note(const std::string& k, const std::string& v) { m_.extra.emplace_back(k, v); }
  void finish(bool interrupted) {
    if (!enabled()) return;
    m_.status = interrupted ? "interrupted" : "complete";
    m_.finished = results::utc_timestamp();
    m_.write(dir_ / "manifest.json");
  }

 private:
  std::filesystem::path dir_;
  results::RunManifest m_;
};

std::unique_ptr<results::CsvWriter> open_csv(Manifest& m, const std::string& name,
                                             const std::vector<std::string>& header) {
  if (!m.enabled()) return nullptr;
  return std::make_unique<results::CsvWriter>(m.file(name), header);
}

void write_text(Manifest& m, const std::string& name, const std::string& text) {
  if (!m.enabled()) return;
  std::ofstream out(m.file(name));
  if (!out) throw Error("cannot write " + name);
  out << text;
}

data::LabeledSet load_cifar(const ExperimentConfig& cfg, Rng& rng) {
  std::string root = cfg.data_root;
  if (root.empty())
    if (const char* env = std::getenv("FADE_DATA_ROOT")) root = env;
  if (root.empty()) throw ConfigError("dataset = cifar10 needs data_root or FADE_DATA_ROOT");
  data::LabeledSet all = data::load_cifar10(root);
  if (!cfg.cifar_classes.empty()) {
    std::vector<std::size_t> keep;
    std::vector<int> relabel(data::kCifarClasses, -1);
    for (std::size_t i = 0; i < cfg.cifar_classes.size(); ++i) relabel.at(cfg.cifar_classes[i]) = static_cast<int>(i);
    for (std::size_t i = 0; i < all.size(); ++i)
      if (relabel[all.labels[i]] >= 0) keep.push_back(i);
    all = all.subset(keep);
    for (auto& y : all.labels) y = relabel[y];
    all.classes = cfg.cifar_classes.size();
  }
  if (cfg.cifar_limit && cfg.cifar_limit < all.size()) {
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cfg.cifar_limit);
    all = all.subset(idx);
  }
  return data::downsample(all, cfg.downsample);
}

search::SearchConfig search_config(const ExperimentConfig& cfg) {
  search::SearchConfig s;
  s.depth = cfg.depth;
  s.outer_epochs = cfg.outer_epochs;
  s.gamma = cfg.gamma;
  s.lambda = cfg.lambda;
  s.sign = step_sign(cfg);
  s.eval_every = cfg.eval_every;
  return s;
}

search::EvalSettings eval_settings(const ExperimentConfig& cfg, const data::LabeledSet& data) {
  return {arch_config(cfg, data), train_config(cfg, cfg.discrete_epochs), cfg.eval_repeats, cfg.discrete_epochs};
}

std::string path_string(const rank::Path& p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "-" : "") + std::to_string(p[i]);
  return s;
}

}  // namespace

arch::ArchConfig arch_config(const ExperimentConfig& cfg, const data::LabeledSet& data) {
  arch::ArchConfig a;
  a.input_channels = data.channels;
  a.classes = data.classes;
  a.deepest_channels = cfg.channels;
  a.gmax_vertices = cfg.max_vertices;
  a.temperature = cfg.temperature;
  a.alpha_init_std = cfg.alpha_init_std;
  return a;
}

train::TrainConfig train_config(const ExperimentConfig& cfg, std::size_t epochs) {
  train::TrainConfig t;
  t.batch_size = cfg.batch_size;
  t.epochs = epochs;
  t.clip_value = cfg.clip;
  t.adam = {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  t.alpha_lr = cfg.alpha_lr;
  t.weight_batches_per_epoch = cfg.weight_batches;
  t.arch_batches_per_epoch = cfg.arch_batches;
  t.alpha_average_last = cfg.alpha_average_last;
  return t;
}

train::RegSchedule reg_schedule(const ExperimentConfig& cfg, std::size_t epochs) {
  train::RegSchedule s;
  s.mode = cfg.reg_mode == "dependent" ? train::RegMode::kCellDependent : train::RegMode::kCellIndependent;
  s.r_start = cfg.r_start;
  s.r_end = cfg.r_end;
  s.total_epochs = std::max<std::size_t>(1, epochs);
  s.depth = cfg.depth;
  return s;
}

search::GpConfig gp_config(const ExperimentConfig& cfg) {
  search::GpConfig g;
  g.length_scale = cfg.gp_length_scale;
  g.signal_variance = cfg.gp_signal_variance;
  g.noise_variance = cfg.gp_noise;
  g.kappa = cfg.kappa;
  g.xi = cfg.xi;
  g.lattice_per_dim = cfg.lattice;
  g.fit_length_scale = cfg.gp_fit_length_scale;
  return g;
}

search::StepSign step_sign(const ExperimentConfig& cfg) {
  return cfg.sign == "descent" ? search::StepSign::kDescentAsWritten : search::StepSign::kAscent;
}

data::ConcaveOracle concave_oracle(const ExperimentConfig& cfg) {
  data::ConcaveOracle o;
  for (std::size_t k = 0; k < graph::kFeatureDims; ++k) o.optimum[k] = cfg.oracle_optimum.at(k);
  return o;
}

Workload make_workload(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng data_rng = stream(seed, kDataStream);
  Workload w;
  data::LabeledSet set;
  if (cfg.dataset == "planted") {
    data::PlantedTaskParams p{cfg.samples, cfg.image_height, cfg.image_side, cfg.noise, cfg.depth,
                             std::min<std::size_t>(cfg.width, 5)};
    w.planted = data::make_planted_cell_quality(p, data_rng);
    set = w.planted->data;
  } else if (cfg.dataset == "xor") {
    set = data::make_xor_patterns({cfg.samples, cfg.image_side, cfg.noise}, data_rng);
  } else {
    set = load_cifar(cfg, data_rng);
  }
  Rng split_rng = stream(seed, kSplitStream);
  w.splits = data::split(set, {cfg.split[0], cfg.split[1], cfg.split[2]}, split_rng);
  return w;
}

graph::FeatureGrid make_grid(const ExperimentConfig& cfg) {
  return graph::build_grid(graph::enumerate_dags(cfg.max_vertices), static_cast<int>(cfg.bins));
}

std::vector<std::vector<graph::Dag>> spread_rows(const std::vector<graph::Dag>& dags, std::size_t depth,
                                                 std::size_t width) {
  if (dags.empty() || width == 0) throw ConfigError("spread_rows needs graphs and width >= 1");
  auto sorted = dags;
  std::stable_sort(sorted.begin(), sorted.end(), [](const graph::Dag& a, const graph::Dag& b) {
    if (a.vertex_count() != b.vertex_count()) return a.vertex_count() < b.vertex_count();
    if (a.edge_count() != b.edge_count()) return a.edge_count() < b.edge_count();
    return a < b;
  });
  std::vector<graph::Dag> row;
  for (std::size_t k = 0; k < width; ++k) {
    const std::size_t idx =
        width == 1 ? sorted.size() - 1
                   : static_cast<std::size_t>(std::lround(static_cast<double>(k) * static_cast<double>(sorted.size() - 1) /
                                                          static_cast<double>(width - 1)));
    row.push_back(sorted[idx]);
  }
  return std::vector<std::vector<graph::Dag>>(depth, row);
}

std::vector<rank::Path> parse_paths(const std::string& spec, std::size_t depth, std::size_t width) {
  if (spec == "all" || spec.empty()) return rank::all_paths(depth, width);
  std::vector<rank::Path> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    rank::Path p;
    std::stringstream ps(item);
    std::string idx;
    while (std::getline(ps, idx, '-')) {
      try {
        p.push_back(std::stoul(idx));
      } catch (const std::exception&) {
        throw ConfigError("bad path '" + item + "'");
      }
    }
    if (p.size() != depth) throw ConfigError("path '" + item + "' does not have " + std::to_string(depth) + " entries");
    for (auto m : p)
      if (m >= width) throw ConfigError("path '" + item + "' selects a member outside width " + std::to_string(width));
    out.push_back(std::move(p));
  }
  if (out.empty()) throw ConfigError("no validation paths given");
  return out;
}

ValidationOutcome validate_ranks(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  Workload w = make_workload(cfg, seed);
  Manifest manifest(out_dir, "validate-ranks", cfg, seed);
  ValidationOutcome out;
  const bool planted_rows = cfg.rows == "planted" || (cfg.rows == "auto" && w.planted);
  out.rows = planted_rows ? w.planted->variants : spread_rows(graph::enumerate_dags(cfg.max_vertices), cfg.depth, cfg.width);
  const std::size_t width = out.rows.front().size();

  const auto arch = arch_config(cfg, w.splits.test);
  const auto tc = train_config(cfg, cfg.hyper_epochs);
  Rng rng = stream(seed, kTrainStream);
  arch::HyperArchitecture h(arch, out.rows, rng);
  auto log = open_csv(manifest, "training_log.csv", results::training_log_header());
  train::TrainLogger logger;
  if (log) logger = [&](const train::TrainLogRow& row) { log->row(results::training_log_row(1, row)); };
  const auto trained = train::train_hyperarch(h, w.splits, tc, reg_schedule(cfg, cfg.hyper_epochs), rng, logger);
  out.completed_epochs = trained.completed_epochs;
  out.interrupted = trained.completed_epochs < cfg.hyper_epochs;
  if (trained.completed_epochs == 0) {
    manifest.finish(true);
    return out;
  }

  const auto alpha = trained.final_alpha(cfg.alpha_average_last);
  const auto table = rank::rank_paths(alpha, parse_paths(cfg.validation_paths, cfg.depth, width));
  write_text(manifest, "ranks.csv", table.to_csv());

  auto acc_csv = open_csv(manifest, "accuracies.csv", {"path", "score", "accuracy"});
  out.report.alpha = alpha;
  out.report.marginals = rank::marginals({alpha});
  const auto train_discrete_cfg = train_config(cfg, cfg.discrete_epochs);
  for (std::size_t p = 0; p < table.paths.size(); ++p) {
    if (interrupt_requested()) {
      out.interrupted = true;
      break;
    }
    std::vector<graph::Dag> cells;
    for (std::size_t i = 0; i < cfg.depth; ++i) cells.push_back(out.rows[i][table.paths[p][i]]);
    Rng prng = stream(seed, 1000 + p);
    arch::DiscreteNetwork net(arch, cells, prng);
    const double acc = train::train_discrete(net, w.splits, cfg.discrete_epochs, train_discrete_cfg, prng);
    out.report.paths.push_back(table.paths[p]);
    out.report.scores.push_back(table.scores[p]);
    out.report.accuracies.push_back(acc);
    if (acc_csv) acc_csv->row({path_string(table.paths[p]), results::fmt(table.scores[p]), results::fmt(acc)});
  }
  if (out.report.paths.size() >= 2) {
    try {
      out.report.spearman = rank::spearman(out.report.scores, out.report.accuracies);
    } catch (const NumericError&) {
      out.report.spearman = 0.0;
      manifest.note("spearman", "undefined: constant scores or accuracies; reported as 0");
    }
  }
  write_text(manifest, "report.json", out.report.to_json() + "\n");
  manifest.finish(out.interrupted);
  return out;
}

SearchOutcome search_run(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  Workload w = make_workload(cfg, seed);
  const auto grid = make_grid(cfg);
  Manifest manifest(out_dir, "search", cfg, seed);
  auto log = open_csv(manifest, "training_log.csv", results::training_log_header());
  auto traj = open_csv(manifest, "trajectory.csv", results::trajectory_header());
  auto props = open_csv(manifest, "proposals.csv", results::proposal_header());
  auto hist = open_csv(manifest, "history.csv", results::history_header(cfg.depth));

  std::size_t outer = 1;
  train::TrainLogger logger;
  if (log) logger = [&](const train::TrainLogRow& row) { log->row(results::training_log_row(outer, row)); };
  search::NeuralSearchSettings settings{arch_config(cfg, w.splits.test), train_config(cfg, cfg.inner_epochs),
                                        reg_schedule(cfg, cfg.inner_epochs), cfg.carry_weights};
  search::DartsBetaSource beta(w.splits, settings, logger);

  // Every evaluation replays the same stream, so equal anchors score equally
  // and epochs are compared on common random numbers.
  const auto es = eval_settings(cfg, w.splits.test);
  search::PointEvaluator evaluator = [&](const std::vector<graph::FeaturePoint>& points, Rng&) {
    Rng eval_rng = stream(seed, kEvalStream);
    return search::evaluate_point(points, grid, w.splits, es, eval_rng);
  };
  auto on_epoch = [&](const search::EpochRecord& rec) {
    if (traj)
      for (const auto& r : results::trajectory_rows(rec)) traj->row(r);
    if (props)
      for (const auto& r : results::proposal_rows(rec)) props->row(r);
    if (hist && rec.evaluation) hist->row(results::history_row(rec.outer_epoch, "fade", rec.anchors, *rec.evaluation));
    ++outer;
  };

  Rng rng = stream(seed, kSearchStream);
  SearchOutcome out;
  try {
    out.trajectory = search::run_search(search_config(cfg), grid, beta, rng, evaluator, on_epoch);
  } catch (const Error&) {
    if (!interrupt_requested()) throw;
  }
  out.interrupted = out.trajectory.size() < cfg.outer_epochs;
  manifest.finish(out.interrupted);
  return out;
}

SearchOutcome oracle_search(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  cfg.validate();
  const auto grid = make_grid(cfg);
  const auto oracle = concave_oracle(cfg);
  Manifest manifest(out_dir, "oracle-search", cfg, seed);
  auto traj = open_csv(manifest, "trajectory.csv", results::trajectory_header());
  auto props = open_csv(manifest, "proposals.csv", results::proposal_header());
  auto hist = open_csv(manifest, "history.csv", results::history_header(cfg.depth));

  search::OracleBetaSource beta([oracle](std::size_t, const graph::FeaturePoint& p) { return oracle(p); },
                                cfg.oracle_temperature);
  auto on_epoch = [&](const search::EpochRecord& rec) {
    if (traj)
      for (const auto& r : results::trajectory_rows(rec)) traj->row(r);
    if (props)
      for (const auto& r : results::proposal_rows(rec)) props->row(r);
    if (hist && rec.evaluation)
      hist->row(results::history_row(rec.outer_epoch, "fade-oracle", rec.anchors, *rec.evaluation));
  };
  Rng rng = stream(seed, kSearchStream);
  SearchOutcome out;
  out.trajectory = search::run_search(search_config(cfg), grid, beta, rng, search::oracle_evaluator(oracle), on_epoch);
  out.interrupted = out.trajectory.size() < cfg.outer_epochs;
  manifest.finish(out.interrupted);
  return out;
}

BaselineOutcome baseline(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& method,
                         const std::string& objective, const std::filesystem::path& out_dir) {
  if (method != "rs" && method != "bo") throw ConfigError("baseline method must be rs or bo");
  if (objective != "neural" && objective != "oracle") throw ConfigError("baseline objective must be neural or oracle");
  cfg.validate();
  Manifest manifest(out_dir, "baseline", cfg, seed);
  manifest.note("method", method);
  manifest.note("objective", objective);
  if (method == "bo") {
    manifest.note("kappa", results::fmt(cfg.kappa));
    manifest.note("xi", results::fmt(cfg.xi));
  }

  std::optional<Workload> w;
  std::optional<graph::FeatureGrid> grid;
  search::PointEvaluator evaluator;
  if (objective == "oracle") {
    evaluator = search::oracle_evaluator(concave_oracle(cfg));
  } else {
    w = make_workload(cfg, seed);
    grid = make_grid(cfg);
    evaluator = [&, es = eval_settings(cfg, w->splits.test)](const std::vector<graph::FeaturePoint>& points, Rng&) {
      Rng eval_rng = stream(seed, kEvalStream);
      return search::evaluate_point(points, *grid, w->splits, es, eval_rng);
    };
  }
  auto hist = open_csv(manifest, "history.csv", results::history_header(cfg.depth));
  auto on_record = [&](const search::BaselineRecord& r) {
    if (hist) hist->row(results::history_row(r.epoch, method, r.points, r.evaluation));
  };
  Rng rng = stream(seed, kSearchStream);
  BaselineOutcome out;
  out.history = method == "rs" ? search::random_search(cfg.depth, cfg.budget, evaluator, rng, on_record)
                               : search::bo_ucb(cfg.depth, cfg.budget, gp_config(cfg), evaluator, rng, on_record);
  out.interrupted = out.history.records.size() < cfg.budget;
  manifest.finish(out.interrupted);
  return out;
}

search::Evaluation evaluate(const ExperimentConfig& cfg, std::uint64_t seed,
                            const std::vector<graph::FeaturePoint>& points, const std::filesystem::path& out_dir) {
  if (points.size() != cfg.depth)
    throw ConfigError("eval needs " + std::to_string(cfg.depth) + " points, got " + std::to_string(points.size()));
  Workload w = make_workload(cfg, seed);
  const auto grid = make_grid(cfg);
  Manifest manifest(out_dir, "eval", cfg, seed);
  Rng rng = stream(seed, kEvalStream);
  const auto e = search::evaluate_point(points, grid, w.splits, eval_settings(cfg, w.splits.test), rng);
  if (manifest.enabled()) {
    results::CsvWriter hist(manifest.file("history.csv"), results::history_header(cfg.depth));
    hist.row(results::history_row(1, "eval", points, e));
    nlohmann::ordered_json j;
    j["median_accuracy"] = e.median;
    j["accuracies"] = e.values;
    for (const auto& chain : e.architectures) {
      std::vector<std::string> cells;
      for (const auto& d : chain) cells.push_back(d.to_string());
      j["architectures"].push_back(cells);
    }
    write_text(manifest, "evaluation.json", j.dump(2) + "\n");
  }
  manifest.finish(interrupt_requested());
  return e;
}

}  // namespace fade::exp
