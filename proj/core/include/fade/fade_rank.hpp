#pragma once

// Path scores from trained architecture parameters and the rank statistics
// used to validate them against from-scratch evaluations.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fade::rank {

using AlphaMatrix = std::vector<std::vector<double>>;
using Path = std::vector<std::size_t>;

// Product of the selected per-row alpha entries (paths are 0-based).
double fade_rank(const AlphaMatrix& alpha, std::span<const std::size_t> path);

// All w^d paths in lexicographic order.
std::vector<Path> all_paths(std::size_t depth, std::size_t width);

struct RankTable {
  std::vector<Path> paths;
  std::vector<double> scores;
  std::string provenance;

  std::size_t best() const;
  std::string to_csv() const;
};

RankTable rank_paths(const AlphaMatrix& alpha, std::vector<Path> paths, std::string provenance = "final");

// Element-wise mean of equally shaped alpha matrices.
AlphaMatrix marginals(const std::vector<AlphaMatrix>& snapshots);

// Ranks starting at 1; ties share their average rank.
std::vector<double> average_ranks(std::span<const double> xs);

// Spearman's rho as the Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
  std::vector<Path> paths;
  std::vector<double> scores;
  std::vector<double> accuracies;
  double spearman = 0.0;
  AlphaMatrix alpha;
  AlphaMatrix marginals;

  std::string to_json() const;
};

}  // namespace fade::rank
