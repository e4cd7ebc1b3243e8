#pragma once

// Experiment drivers shared by the command-line tool and the acceptance
// suite. Every driver takes a validated config and a seed; when `out_dir` is
// non-empty it writes its CSV artifacts and a run manifest there.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fade/config.hpp"
#include "fade/data.hpp"
#include "fade/fade_rank.hpp"
#include "fade/graph_space.hpp"
#include "fade/hyperarch.hpp"
#include "fade/outer_search.hpp"

namespace fade::exp {

// Independent random streams derived from one run seed.
enum Stream : std::uint64_t { kDataStream = 0, kSplitStream = 1, kTrainStream = 2, kSearchStream = 3, kEvalStream = 4 };

arch::ArchConfig arch_config(const ExperimentConfig& cfg, const data::LabeledSet& data);
train::TrainConfig train_config(const ExperimentConfig& cfg, std::size_t epochs);
train::RegSchedule reg_schedule(const ExperimentConfig& cfg, std::size_t epochs);
search::GpConfig gp_config(const ExperimentConfig& cfg);
search::StepSign step_sign(const ExperimentConfig& cfg);

struct Workload {
  data::DatasetSplits splits;
  std::optional<data::PlantedTask> planted;
};

// Builds the configured dataset and its 1:1:4-style split.
Workload make_workload(const ExperimentConfig& cfg, std::uint64_t seed);

// Enumerated cell space bucketed on the configured grid.
graph::FeatureGrid make_grid(const ExperimentConfig& cfg);

// `width` graphs spread evenly over the enumerated space ordered by
// (vertex count, edge count, code); the same selection for every row.
std::vector<std::vector<graph::Dag>> spread_rows(const std::vector<graph::Dag>& dags, std::size_t depth,
                                                 std::size_t width);

// "all" or comma-separated dash-joined member indices, e.g. "0-2,1-1".
std::vector<rank::Path> parse_paths(const std::string& spec, std::size_t depth, std::size_t width);

struct ValidationOutcome {
  rank::CorrelationReport report;
  std::vector<std::vector<graph::Dag>> rows;
  std::size_t completed_epochs = 0;
  bool interrupted = false;
};

ValidationOutcome validate_ranks(const ExperimentConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& out_dir = {});

struct SearchOutcome {
  search::Trajectory trajectory;
  bool interrupted = false;
};

// Neural outer search (hyper-architecture training per outer epoch).
SearchOutcome search_run(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir = {});

// The same loop with beta read from the concave oracle.
SearchOutcome oracle_search(const ExperimentConfig& cfg, std::uint64_t seed,
                            const std::filesystem::path& out_dir = {});

struct BaselineOutcome {
  search::BaselineHistory history;
  bool interrupted = false;
};

// method: "rs" | "bo"; objective: "neural" trains generated chains, "oracle"
// scores points with the concave oracle.
BaselineOutcome baseline(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& method,
                         const std::string& objective, const std::filesystem::path& out_dir = {});

// Generates and trains architectures for the given per-cell points.
search::Evaluation evaluate(const ExperimentConfig& cfg, std::uint64_t seed,
                            const std::vector<graph::FeaturePoint>& points,
                            const std::filesystem::path& out_dir = {});

data::ConcaveOracle concave_oracle(const ExperimentConfig& cfg);

}  // namespace fade::exp
