#pragma once

// Cell search space: small directed acyclic graphs, their canonical forms,
// a three-dimensional structural feature embedding and the bucketed
// generator that maps feature points back to graphs.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fade/random.hpp"

namespace fade::graph {

// Upper bound for exhaustive enumeration of the cell space.
inline constexpr int kMaxEnumerationVertices = 6;
// Canonicalization walks all topological orders; keep it tractable.
inline constexpr int kMaxCanonicalVertices = 8;
inline constexpr std::size_t kFeatureDims = 3;

struct Edge {
  int from = 0;
  int to = 0;

  auto operator<=>(const Edge&) const = default;
};

/// A small directed graph on vertices 0..vertex_count-1.
///
/// Construction only checks local well-formedness (range, self loops,
/// duplicates). Acyclicity is checked by canonicalize(); graphs returned by
/// canonicalize() and enumerate_dags() satisfy from < to on every edge.
class Dag {
 public:
  Dag() = default;  // single vertex, no edges
  Dag(int vertex_count, std::vector<Edge> edges);

  int vertex_count() const { return vertex_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  bool has_edge(int from, int to) const;
  std::vector<int> in_degrees() const;
  std::vector<int> out_degrees() const;

  // Edge bits over the pairs (0,1),(0,2),...,(0,n-1),(1,2),... with the first
  // pair as most significant bit. Only meaningful when every edge has from < to.
  std::uint64_t upper_code() const;

  // True when edges are forward under the current labeling and the labeling
  // is the canonical representative.
  bool is_canonical() const;

  std::string to_string() const;

  friend bool operator==(const Dag&, const Dag&) = default;
  friend bool operator<(const Dag& a, const Dag& b) {
    if (a.vertex_count_ != b.vertex_count_) return a.vertex_count_ < b.vertex_count_;
    return a.edges_ < b.edges_;
  }

 private:
  int vertex_count_ = 1;
  std::vector<Edge> edges_;
};

// Index of pair (u, v), u < v, in the upper-triangular enumeration for n vertices.
int pair_index(int u, int v, int n);

/// Canonical representative of the isomorphism class: the relabeling along a
/// topological order whose upper-triangular bit string is minimal.
/// Throws InvalidGraphError when the graph has a cycle.
Dag canonicalize(const Dag& dag);

/// All non-isomorphic DAGs with 1..max_vertices vertices in canonical form,
/// ordered by (vertex count, code). Throws ConfigError outside [1, 6].
std::vector<Dag> enumerate_dags(int max_vertices);

struct RawFeatures {
  double ecc_var = 0.0;
  double deg_var = 0.0;
  double n_vertices = 0.0;
};

// Per-vertex eccentricity on the undirected closure, restricted to the vertex's
// connected component (isolated vertices have eccentricity 0).
std::vector<int> undirected_eccentricities(const Dag& dag);
RawFeatures raw_features(const Dag& dag);

struct FeaturePoint {
  std::array<double, kFeatureDims> x{};

  double ecc_var() const { return x[0]; }
  double deg_var() const { return x[1]; }
  double n_vertices() const { return x[2]; }
  double& operator[](std::size_t i) { return x[i]; }
  double operator[](std::size_t i) const { return x[i]; }

  friend bool operator==(const FeaturePoint&, const FeaturePoint&) = default;
};

FeaturePoint clamp_unit(FeaturePoint p);

// Min-max norming constants, fitted once over the enumerated space.
struct FeatureNorm {
  std::array<double, kFeatureDims> lo{};
  std::array<double, kFeatureDims> hi{};

  static FeatureNorm fit(const std::vector<Dag>& dags);
  FeaturePoint apply(const RawFeatures& raw) const;
};

FeaturePoint embed(const Dag& dag, const FeatureNorm& norm);

using BucketIndex = std::array<int, kFeatureDims>;

class FeatureGrid {
 public:
  FeatureGrid(int bins_per_dim, FeatureNorm norm,
              std::map<BucketIndex, std::vector<Dag>> buckets);

  int bins_per_dim() const { return bins_per_dim_; }
  const FeatureNorm& norm() const { return norm_; }
  const std::map<BucketIndex, std::vector<Dag>>& buckets() const { return buckets_; }
  std::size_t graph_count() const;

  BucketIndex interval(const FeaturePoint& p) const;
  FeaturePoint bucket_center(const BucketIndex& b) const;
  // The bucket that generate() samples from for this point.
  BucketIndex resolve(const FeaturePoint& p) const;
  const std::vector<Dag>* find(const BucketIndex& b) const;

  std::string to_json() const;
  static FeatureGrid from_json(const std::string& text);

 private:
  int bins_per_dim_ = 1;
  FeatureNorm norm_;
  std::map<BucketIndex, std::vector<Dag>> buckets_;
};

/// Partitions [0,1]^3 into bins_per_dim^3 cells, fits the norm on `dags`
/// and keeps only non-empty buckets.
FeatureGrid build_grid(const std::vector<Dag>& dags, int bins_per_dim);

/// Uniform draw from the bucket containing `point`, or from the nearest
/// non-empty bucket (center distance, ties to the lexicographically first).
Dag generate(const FeaturePoint& point, const FeatureGrid& grid, Rng& rng);

}  // namespace fade::graph
