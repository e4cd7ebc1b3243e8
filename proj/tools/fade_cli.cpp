// fade: command-line driver for enumeration, rank validation, search and baselines.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "fade/config.hpp"
#include "fade/error.hpp"
#include "fade/experiments.hpp"
#include "fade/interrupt.hpp"
#include "fade/results.hpp"

namespace {

extern "C" void on_sigint(int) { fade::interrupt_flag().store(true); }

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInterrupted = 130;

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out_dir;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
  app->add_option("--seed", c.seed, "base seed (overrides the config)");
  app->add_option("--out-dir", c.out_dir, "directory for artifacts (default runs/<command>)");
}

fade::ExperimentConfig load(const Common& c) {
  fade::ExperimentConfig cfg = c.config_file.empty() ? fade::ExperimentConfig{} : fade::load_config(c.config_file);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw fade::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

std::vector<std::uint64_t> seed_list(const fade::ExperimentConfig& cfg) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < cfg.seeds; ++i) s.push_back(cfg.seed + i);
  return s;
}

std::filesystem::path run_dir(const Common& c, const std::string& command, const fade::ExperimentConfig& cfg,
                              std::uint64_t seed) {
  std::filesystem::path base = c.out_dir.empty() ? std::filesystem::path("runs") / command : std::filesystem::path(c.out_dir);
  return cfg.seeds > 1 ? base / ("seed_" + std::to_string(seed)) : base;
}

std::vector<fade::graph::FeaturePoint> parse_points(const std::vector<std::string>& raw) {
  std::vector<fade::graph::FeaturePoint> out;
  for (const auto& s : raw) {
    fade::graph::FeaturePoint p;
    std::stringstream ss(s);
    std::string item;
    std::size_t k = 0;
    while (std::getline(ss, item, ',')) {
      if (k >= fade::graph::kFeatureDims) throw fade::ConfigError("point '" + s + "' has more than 3 coordinates");
      try {
        p[k++] = std::stod(item);
      } catch (const std::exception&) {
        throw fade::ConfigError("bad coordinate in point '" + s + "'");
      }
    }
    if (k != fade::graph::kFeatureDims) throw fade::ConfigError("point '" + s + "' needs 3 coordinates");
    out.push_back(fade::graph::clamp_unit(p));
  }
  return out;
}

int enumerate_cmd(int max_vertices, int bins, const std::string& out) {
  const auto dags = fade::graph::enumerate_dags(max_vertices);
  std::map<int, std::size_t> per_size;
  for (const auto& d : dags) ++per_size[d.vertex_count()];
  for (const auto& [n, count] : per_size) std::cout << "n=" << n << " dags=" << count << "\n";
  std::cout << "total=" << dags.size() << "\n";
  const auto grid = fade::graph::build_grid(dags, bins);
  std::cout << "non-empty buckets=" << grid.buckets().size() << " of " << bins * bins * bins << "\n";
  if (!out.empty()) {
    const std::filesystem::path file(out);
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream f(file);
    if (!f) throw fade::Error("cannot write " + out);
    f << grid.to_json() << "\n";
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);

  CLI::App app{"fade: differentiable rank estimation and feature-space search over chained DAG cells"};
  app.require_subcommand(1);

  int enum_max = 5, enum_bins = 8;
  std::string enum_out;
  auto* enumerate = app.add_subcommand("enumerate", "enumerate non-isomorphic DAGs and bucket them");
  enumerate->add_option("--max-vertices", enum_max, "largest vertex count (1..6)");
  enumerate->add_option("--bins", enum_bins, "buckets per feature axis");
  enumerate->add_option("--out", enum_out, "write the feature grid as JSON");

  Common validate_opts, search_opts, baseline_opts, eval_opts, oracle_opts;
  auto* validate = app.add_subcommand("validate-ranks", "train a hyper-architecture and correlate ranks with accuracies");
  add_common(validate, validate_opts);
  auto* search = app.add_subcommand("search", "run the anchor search with hyper-architecture training");
  add_common(search, search_opts);
  std::string method = "rs", objective = "neural";
  auto* baseline = app.add_subcommand("baseline", "random search or GP-UCB over the joint feature space");
  add_common(baseline, baseline_opts);
  baseline->add_option("--method", method, "rs or bo")->check(CLI::IsMember({"rs", "bo"}));
  baseline->add_option("--objective", objective, "neural or oracle")->check(CLI::IsMember({"neural", "oracle"}));
  std::vector<std::string> points;
  auto* eval = app.add_subcommand("eval", "generate and train architectures for per-cell feature points");
  add_common(eval, eval_opts);
  eval->add_option("--point", points, "x,y,z per cell in [0,1]^3, one per cell")->required();
  auto* oracle = app.add_subcommand("oracle-search", "anchor search against the concave oracle");
  add_common(oracle, oracle_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (enumerate->parsed()) return enumerate_cmd(enum_max, enum_bins, enum_out);

    bool interrupted = false;
    if (validate->parsed()) {
      const auto cfg = load(validate_opts);
      for (auto seed : seed_list(cfg)) {
        const auto dir = run_dir(validate_opts, "validate-ranks", cfg, seed);
        const auto out = fade::exp::validate_ranks(cfg, seed, dir);
        std::cout << "seed=" << seed << " epochs=" << out.completed_epochs << " paths=" << out.report.paths.size()
                  << " spearman=" << fade::results::fmt(out.report.spearman) << " -> " << dir.string() << "\n";
        if ((interrupted = out.interrupted)) break;
      }
    } else if (search->parsed()) {
      const auto cfg = load(search_opts);
      for (auto seed : seed_list(cfg)) {
        const auto dir = run_dir(search_opts, "search", cfg, seed);
        const auto out = fade::exp::search_run(cfg, seed, dir);
        std::cout << "seed=" << seed << " outer_epochs=" << out.trajectory.size() << " -> " << dir.string() << "\n";
        if ((interrupted = out.interrupted)) break;
      }
    } else if (baseline->parsed()) {
      const auto cfg = load(baseline_opts);
      for (auto seed : seed_list(cfg)) {
        const auto dir = run_dir(baseline_opts, "baseline-" + method, cfg, seed);
        const auto out = fade::exp::baseline(cfg, seed, method, objective, dir);
        const auto& h = out.history;
        if (!h.records.empty())
          std::cout << "seed=" << seed << " method=" << method << " proposals=" << h.records.size()
                    << " best=" << fade::results::fmt(h.records[h.best()].evaluation.median) << " -> "
                    << dir.string() << "\n";
        if ((interrupted = out.interrupted)) break;
      }
    } else if (eval->parsed()) {
      const auto cfg = load(eval_opts);
      const auto pts = parse_points(points);
      for (auto seed : seed_list(cfg)) {
        const auto dir = run_dir(eval_opts, "eval", cfg, seed);
        const auto e = fade::exp::evaluate(cfg, seed, pts, dir);
        std::cout << "seed=" << seed << " median_accuracy=" << fade::results::fmt(e.median) << " -> " << dir.string()
                  << "\n";
        if ((interrupted = fade::interrupt_requested())) break;
      }
    } else if (oracle->parsed()) {
      const auto cfg = load(oracle_opts);
      for (auto seed : seed_list(cfg)) {
        const auto dir = run_dir(oracle_opts, "oracle-search", cfg, seed);
        const auto out = fade::exp::oracle_search(cfg, seed, dir);
        std::cout << "seed=" << seed << " outer_epochs=" << out.trajectory.size();
        for (std::size_t i = 0; i < out.trajectory.final_anchors.size(); ++i) {
          const auto& a = out.trajectory.final_anchors[i];
          std::cout << " cell" << i << "=(" << fade::results::fmt(a[0]) << "," << fade::results::fmt(a[1]) << ","
                    << fade::results::fmt(a[2]) << ")";
        }
        std::cout << " -> " << dir.string() << "\n";
        if ((interrupted = out.interrupted)) break;
      }
    }
    if (interrupted) {
      std::cerr << "interrupted; completed epochs were flushed\n";
      return kExitInterrupted;
    }
    return 0;
  } catch (const fade::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
