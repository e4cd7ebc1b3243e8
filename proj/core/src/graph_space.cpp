#include "fade/graph_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fade/error.hpp"

namespace fade::graph {
namespace {

int pair_count(int n) { return n * (n - 1) / 2; }

// Kahn's algorithm; returns false on a cycle.
bool has_topological_order(const Dag& dag) {
  auto indeg = dag.in_degrees();
  std::vector<std::vector<int>> out(dag.vertex_count());
  for (const auto& e : dag.edges()) out[e.from].push_back(e.to);
  std::queue<int> ready;
  for (int v = 0; v < dag.vertex_count(); ++v)
    if (indeg[v] == 0) ready.push(v);
  int seen = 0;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop();
    ++seen;
    for (int w : out[v])
      if (--indeg[w] == 0) ready.push(w);
  }
  return seen == dag.vertex_count();
}

struct OrderSearch {
  int n;
  std::vector<std::uint32_t> preds;  // bitmask of predecessors per vertex
  std::vector<std::pair<int, int>> edges;
  std::vector<int> order;
  std::vector<int> position;
  std::uint32_t placed = 0;
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  std::vector<int> best_order;

  void run() {
    if (static_cast<int>(order.size()) == n) {
      std::uint64_t code = 0;
      const int total = pair_count(n);
      for (auto [u, v] : edges) {
        int a = position[u], b = position[v];
        code |= std::uint64_t{1} << (total - 1 - pair_index(a, b, n));
      }
      if (code < best) {
        best = code;
        best_order = order;
      }
      return;
    }
    for (int v = 0; v < n; ++v) {
      if (placed & (1u << v)) continue;
      if ((preds[v] & placed) != preds[v]) continue;
      placed |= 1u << v;
      position[v] = static_cast<int>(order.size());
      order.push_back(v);
      run();
      order.pop_back();
      placed &= ~(1u << v);
    }
  }
};

}  // namespace

Dag::Dag(int vertex_count, std::vector<Edge> edges)
    : vertex_count_(vertex_count), edges_(std::move(edges)) {
  if (vertex_count_ < 1) throw InvalidGraphError("graph needs at least one vertex");
  for (const auto& e : edges_) {
    if (e.from < 0 || e.to < 0 || e.from >= vertex_count_ || e.to >= vertex_count_)
      throw InvalidGraphError("edge endpoint out of range: " + to_string());
    if (e.from == e.to) throw InvalidGraphError("self loop on vertex " + std::to_string(e.from));
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
    throw InvalidGraphError("duplicate edge in " + to_string());
}

bool Dag::has_edge(int from, int to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

std::vector<int> Dag::in_degrees() const {
  std::vector<int> d(vertex_count_, 0);
  for (const auto& e : edges_) ++d[e.to];
  return d;
}

std::vector<int> Dag::out_degrees() const {
  std::vector<int> d(vertex_count_, 0);
  for (const auto& e : edges_) ++d[e.from];
  return d;
}

int pair_index(int u, int v, int n) { return u * (2 * n - u - 1) / 2 + (v - u - 1); }

std::uint64_t Dag::upper_code() const {
  const int total = pair_count(vertex_count_);
  std::uint64_t code = 0;
  for (const auto& e : edges_) {
    if (e.from >= e.to) throw InvalidGraphError("upper_code needs forward edges");
    code |= std::uint64_t{1} << (total - 1 - pair_index(e.from, e.to, vertex_count_));
  }
  return code;
}

bool Dag::is_canonical() const {
  for (const auto& e : edges_)
    if (e.from >= e.to) return false;
  return canonicalize(*this) == *this;
}

std::string Dag::to_string() const {
  std::ostringstream os;
  os << "Dag(" << vertex_count_ << ";";
  for (const auto& e : edges_) os << ' ' << e.from << "->" << e.to;
  os << ')';
  return os.str();
}

Dag canonicalize(const Dag& dag) {
  const int n = dag.vertex_count();
  if (n > kMaxCanonicalVertices)
    throw InvalidGraphError("canonicalize supports at most " +
                            std::to_string(kMaxCanonicalVertices) + " vertices");
  if (!has_topological_order(dag)) throw InvalidGraphError("cycle detected in " + dag.to_string());

  OrderSearch search{n, std::vector<std::uint32_t>(n, 0), {}, {}, std::vector<int>(n, 0)};
  for (const auto& e : dag.edges()) {
    search.preds[e.to] |= 1u << e.from;
    search.edges.emplace_back(e.from, e.to);
  }
  search.run();

  std::vector<int> position(n);
  for (int i = 0; i < n; ++i) position[search.best_order[i]] = i;
  std::vector<Edge> relabeled;
  relabeled.reserve(dag.edge_count());
  for (const auto& e : dag.edges()) relabeled.push_back({position[e.from], position[e.to]});
  return Dag(n, std::move(relabeled));
}

std::vector<Dag> enumerate_dags(int max_vertices) {
  if (max_vertices < 1 || max_vertices > kMaxEnumerationVertices)
    throw ConfigError("max_vertices must lie in [1, " + std::to_string(kMaxEnumerationVertices) +
                      "], got " + std::to_string(max_vertices));
  std::vector<Dag> result;
  for (int n = 1; n <= max_vertices; ++n) {
    const int total = pair_count(n);
    std::vector<std::pair<int, int>> pairs;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
    std::set<std::uint64_t> codes;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << total); ++mask) {
      std::vector<Edge> edges;
      for (int p = 0; p < total; ++p)
        if (mask & (std::uint64_t{1} << (total - 1 - p))) edges.push_back({pairs[p].first, pairs[p].second});
      Dag g(n, std::move(edges));
      // mask is g's own code; keep it only when it is already minimal.
      if (canonicalize(g).upper_code() == mask) codes.insert(mask);
    }
    for (std::uint64_t code : codes) {
      std::vector<Edge> edges;
      for (int p = 0; p < total; ++p)
        if (code & (std::uint64_t{1} << (total - 1 - p))) edges.push_back({pairs[p].first, pairs[p].second});
      result.emplace_back(n, std::move(edges));
    }
  }
  return result;
}

std::vector<int> undirected_eccentricities(const Dag& dag) {
  const int n = dag.vertex_count();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : dag.edges()) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::vector<int> ecc(n, 0);
  std::vector<int> dist(n);
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<int> q;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      ecc[s] = std::max(ecc[s], dist[v]);
      for (int w : adj[v])
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
    }
  }
  return ecc;
}

namespace {
template <typename T>
double population_variance(const std::vector<T>& xs) {
  double mean = 0.0;
  for (T x : xs) mean += static_cast<double>(x);
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (T x : xs) acc += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  return acc / static_cast<double>(xs.size());
}
}  // namespace

RawFeatures raw_features(const Dag& dag) {
  auto deg = dag.in_degrees();
  auto out = dag.out_degrees();
  for (std::size_t i = 0; i < deg.size(); ++i) deg[i] += out[i];
  return {population_variance(undirected_eccentricities(dag)), population_variance(deg),
          static_cast<double>(dag.vertex_count())};
}

FeaturePoint clamp_unit(FeaturePoint p) {
  for (auto& v : p.x) v = std::clamp(v, 0.0, 1.0);
  return p;
}

FeatureNorm FeatureNorm::fit(const std::vector<Dag>& dags) {
  if (dags.empty()) throw ConfigError("cannot fit feature norm on an empty graph list");
  FeatureNorm norm;
  norm.lo.fill(std::numeric_limits<double>::infinity());
  norm.hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& g : dags) {
    auto r = raw_features(g);
    std::array<double, kFeatureDims> v{r.ecc_var, r.deg_var, r.n_vertices};
    for (std::size_t k = 0; k < kFeatureDims; ++k) {
      norm.lo[k] = std::min(norm.lo[k], v[k]);
      norm.hi[k] = std::max(norm.hi[k], v[k]);
    }
  }
  return norm;
}

FeaturePoint FeatureNorm::apply(const RawFeatures& raw) const {
  std::array<double, kFeatureDims> v{raw.ecc_var, raw.deg_var, raw.n_vertices};
  FeaturePoint p;
  for (std::size_t k = 0; k < kFeatureDims; ++k) {
    const double span = hi[k] - lo[k];
    p[k] = span > 0.0 ? (v[k] - lo[k]) / span : 0.0;
  }
  return p;
}

FeaturePoint embed(const Dag& dag, const FeatureNorm& norm) { return norm.apply(raw_features(dag)); }

FeatureGrid::FeatureGrid(int bins_per_dim, FeatureNorm norm,
                         std::map<BucketIndex, std::vector<Dag>> buckets)
    : bins_per_dim_(bins_per_dim), norm_(norm), buckets_(std::move(buckets)) {
  if (bins_per_dim_ < 1) throw ConfigError("bins_per_dim must be >= 1");
  for (auto it = buckets_.begin(); it != buckets_.end();) {
    if (it->second.empty())
      it = buckets_.erase(it);
    else
      ++it;
  }
}

std::size_t FeatureGrid::graph_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : buckets_) n += v.size();
  return n;
}

BucketIndex FeatureGrid::interval(const FeaturePoint& p) const {
  BucketIndex b{};
  for (std::size_t k = 0; k < kFeatureDims; ++k) {
    const double v = std::clamp(p[k], 0.0, 1.0);
    b[k] = std::min(static_cast<int>(std::floor(v * bins_per_dim_)), bins_per_dim_ - 1);
  }
  return b;
}

FeaturePoint FeatureGrid::bucket_center(const BucketIndex& b) const {
  FeaturePoint c;
  for (std::size_t k = 0; k < kFeatureDims; ++k) c[k] = (b[k] + 0.5) / bins_per_dim_;
  return c;
}

BucketIndex FeatureGrid::resolve(const FeaturePoint& p) const {
  if (buckets_.empty()) throw ConfigError("feature grid has no buckets");
  const BucketIndex target = interval(p);
  if (buckets_.count(target)) return target;
  const FeaturePoint tc = bucket_center(target);
  double best = std::numeric_limits<double>::infinity();
  BucketIndex best_index{};
  for (const auto& [index, _] : buckets_) {  // lexicographic order, strict < keeps the first tie
    const FeaturePoint c = bucket_center(index);
    double d = 0.0;
    for (std::size_t k = 0; k < kFeatureDims; ++k) d += (c[k] - tc[k]) * (c[k] - tc[k]);
    if (d < best) {
      best = d;
      best_index = index;
    }
  }
  return best_index;
}

const std::vector<Dag>* FeatureGrid::find(const BucketIndex& b) const {
  auto it = buckets_.find(b);
  return it == buckets_.end() ? nullptr : &it->second;
}

std::string FeatureGrid::to_json() const {
  nlohmann::json j;
  j["bins_per_dim"] = bins_per_dim_;
  j["norm"] = {{"lo", norm_.lo}, {"hi", norm_.hi}};
  j["features"] = {"ecc_var", "deg_var", "n_vertices"};
  auto buckets = nlohmann::json::array();
  for (const auto& [index, dags] : buckets_) {
    auto list = nlohmann::json::array();
    for (const auto& g : dags) {
      auto edges = nlohmann::json::array();
      for (const auto& e : g.edges()) edges.push_back({e.from, e.to});
      list.push_back({{"vertex_count", g.vertex_count()}, {"edges", edges}});
    }
    buckets.push_back({{"index", index}, {"dags", list}});
  }
  j["buckets"] = buckets;
  return j.dump(1);
}

FeatureGrid FeatureGrid::from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    FeatureNorm norm;
    norm.lo = j.at("norm").at("lo").get<std::array<double, kFeatureDims>>();
    norm.hi = j.at("norm").at("hi").get<std::array<double, kFeatureDims>>();
    std::map<BucketIndex, std::vector<Dag>> buckets;
    for (const auto& b : j.at("buckets")) {
      auto index = b.at("index").get<BucketIndex>();
      auto& list = buckets[index];
      for (const auto& g : b.at("dags")) {
        std::vector<Edge> edges;
        for (const auto& e : g.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
        list.emplace_back(g.at("vertex_count").get<int>(), std::move(edges));
      }
    }
    return FeatureGrid(j.at("bins_per_dim").get<int>(), norm, std::move(buckets));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid grid json: ") + e.what());
  }
}

FeatureGrid build_grid(const std::vector<Dag>& dags, int bins_per_dim) {
  if (bins_per_dim < 1) throw ConfigError("bins_per_dim must be >= 1, got " + std::to_string(bins_per_dim));
  if (dags.empty()) throw ConfigError("cannot build a grid from an empty graph list");
  const FeatureNorm norm = FeatureNorm::fit(dags);
  FeatureGrid probe(bins_per_dim, norm, {});
  std::map<BucketIndex, std::vector<Dag>> buckets;
  for (const auto& g : dags) buckets[probe.interval(embed(g, norm))].push_back(g);
  return FeatureGrid(bins_per_dim, norm, std::move(buckets));
}

Dag generate(const FeaturePoint& point, const FeatureGrid& grid, Rng& rng) {
  if (grid.buckets().empty()) throw ConfigError("cannot generate from an empty grid");
  const auto& members = *grid.find(grid.resolve(point));
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  return members[pick(rng)];
}

}  // namespace fade::graph
