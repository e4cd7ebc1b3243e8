#include "fade/fade_rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fade/error.hpp"

namespace fade::rank {

double fade_rank(const AlphaMatrix& alpha, std::span<const std::size_t> path) {
  if (path.size() != alpha.size())
    throw BoundsError("path of length " + std::to_string(path.size()) + " for " + std::to_string(alpha.size()) +
                      " rows");
  double p = 1.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] >= alpha[i].size()) throw BoundsError("path index " + std::to_string(path[i]) + " out of range");
    p *= alpha[i][path[i]];
  }
  return p;
}

std::vector<Path> all_paths(std::size_t depth, std::size_t width) {
  if (depth == 0 || width == 0) return {};
  std::vector<Path> out;
  Path p(depth, 0);
  while (true) {
    out.push_back(p);
    std::size_t i = depth;
    while (i > 0) {
      --i;
      if (++p[i] < width) break;
      p[i] = 0;
      if (i == 0) return out;
    }
  }
}

std::size_t RankTable::best() const {
  if (scores.empty()) throw ConfigError("empty rank table");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::string RankTable::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "path,score,provenance\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t k = 0; k < paths[i].size(); ++k) os << (k ? "-" : "") << paths[i][k];
    os << ',' << scores[i] << ',' << provenance << '\n';
  }
  return os.str();
}

RankTable rank_paths(const AlphaMatrix& alpha, std::vector<Path> paths, std::string provenance) {
  RankTable t{std::move(paths), {}, std::move(provenance)};
  t.scores.reserve(t.paths.size());
  for (const auto& p : t.paths) t.scores.push_back(fade_rank(alpha, p));
  return t;
}

AlphaMatrix marginals(const std::vector<AlphaMatrix>& snapshots) {
  if (snapshots.empty()) throw ConfigError("marginals of an empty snapshot list");
  AlphaMatrix mean = snapshots.front();
  for (std::size_t s = 1; s < snapshots.size(); ++s) {
    if (snapshots[s].size() != mean.size()) throw ShapeError("alpha snapshots differ in depth");
    for (std::size_t i = 0; i < mean.size(); ++i) {
      if (snapshots[s][i].size() != mean[i].size()) throw ShapeError("alpha snapshots differ in width");
      for (std::size_t j = 0; j < mean[i].size(); ++j) mean[i][j] += snapshots[s][i][j];
    }
  }
  for (auto& row : mean)
    for (auto& v : row) v /= static_cast<double>(snapshots.size());
  return mean;
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("correlation inputs differ in length");
  if (x.size() < 2) throw ConfigError("correlation needs at least two samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation is undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("correlation inputs differ in length");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::string CorrelationReport::to_json() const {
  nlohmann::json j;
  j["sample_size"] = paths.size();
  j["spearman"] = spearman;
  j["paths"] = paths;
  j["scores"] = scores;
  j["accuracies"] = accuracies;
  j["alpha"] = alpha;
  j["marginals"] = marginals;
  return j.dump(2);
}

}  // namespace fade::rank
