#pragma once

// Cell embodiment, the d x w hyper-architecture with per-row weight sharing
// through a fully connected hyper-cell, and standalone discrete networks.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/graph_space.hpp"
#include "fade/random.hpp"

namespace fade::arch {

inline constexpr std::size_t kKernelSize = 5;

struct ConvParams {
  ad::Value kernel;  // [out, in, 5, 5]
  ad::Value bias;    // [out]

  std::size_t parameter_count() const { return kernel.size() + bias.size(); }
  ConvParams clone() const;
};

ConvParams make_conv(std::size_t in_channels, std::size_t out_channels, Rng& rng);

/// A DAG embodied as a cell: an implicit input vertex feeds every source by
/// identity, every DAG edge carries one 5x5 convolution, vertices combine
/// their inputs by sum and ReLU, and an implicit output vertex sums the sinks.
struct CellSpec {
  graph::Dag dag;
  std::size_t channels = 0;
  std::map<graph::Edge, ConvParams> edge_ops;

  std::vector<int> sources() const;
  std::vector<int> sinks() const;
  std::size_t parameter_count() const;
};

CellSpec embody(const graph::Dag& dag, std::size_t channels, Rng& rng);

// Resolves the convolution on a DAG edge; lets hyper-cells and standalone
// cells share one forward routine.
class EdgeWeights {
 public:
  virtual ~EdgeWeights() = default;
  virtual const ConvParams& at(const graph::Edge& e) const = 0;
};

ad::Value cell_forward(const graph::Dag& dag, const EdgeWeights& weights, const ad::Value& x);

/// One row of the hyper-architecture: the convolutions of the fully connected
/// graph G_max plus the member DAGs that read them through their edge masks.
class HyperCellRow : public EdgeWeights {
 public:
  HyperCellRow(std::size_t channels, int gmax_vertices, std::vector<graph::Dag> members, Rng& rng);

  std::size_t channels() const { return channels_; }
  int gmax_vertices() const { return gmax_vertices_; }
  std::size_t width() const { return members_.size(); }
  const std::vector<graph::Dag>& members() const { return members_; }
  // Bit e set when G_max edge e (pair_index order) belongs to the member.
  const std::vector<std::uint64_t>& masks() const { return masks_; }
  std::vector<ConvParams>& gmax_weights() { return gmax_; }
  const std::vector<ConvParams>& gmax_weights() const { return gmax_; }

  const ConvParams& at(const graph::Edge& e) const override;
  ad::Value forward_member(std::size_t k, const ad::Value& x) const;
  std::size_t parameter_count() const;
  std::size_t member_parameter_count(std::size_t k) const;

 private:
  std::size_t channels_;
  int gmax_vertices_;
  std::vector<graph::Dag> members_;
  std::vector<std::uint64_t> masks_;
  std::vector<ConvParams> gmax_;
};

/// Raw architecture parameters alpha' (d x w) and the Gumbel temperature.
struct AlphaParams {
  ad::Value raw;
  double temperature = 10.0;

  std::size_t depth() const { return raw.dim(0); }
  std::size_t width() const { return raw.dim(1); }
  // softmax(alpha') per row: the selection probabilities of hard sampling.
  std::vector<std::vector<double>> softmaxed() const;
};

/// Softmax_tau(x + g) with g standard Gumbel. With `hard`, the forward value is
/// the one-hot of its argmax and the backward pass uses the soft sample.
ad::Value gumbel_softmax(const ad::Value& x, double tau, Rng& rng, bool hard);

struct ArchConfig {
  std::size_t input_channels = 1;
  std::size_t classes = 2;
  std::size_t deepest_channels = 16;
  int gmax_vertices = 5;  // n_v - 1
  double temperature = 10.0;
  double alpha_init_std = 0.5;
};

// Channels for each row: the deepest row gets `deepest`, shallower rows halve.
std::vector<std::size_t> channel_schedule(std::size_t depth, std::size_t deepest);

enum class ForwardMode { kGumbelHard, kSoftmaxMix, kFixedPath };

struct ForwardResult {
  ad::Value logits;
  std::vector<ad::Value> row_gates;      // gating vector actually applied per row
  std::vector<std::size_t> selected;     // active member per row (hard / fixed modes)
};

class DiscreteNetwork;

class HyperArchitecture {
 public:
  HyperArchitecture(const ArchConfig& config, const std::vector<std::vector<graph::Dag>>& rows, Rng& rng);

  std::size_t depth() const { return rows_.size(); }
  std::size_t width() const { return rows_.front().width(); }
  std::size_t path_count() const;
  const ArchConfig& config() const { return config_; }
  const std::vector<std::size_t>& channels() const { return channels_; }
  const std::vector<HyperCellRow>& rows() const { return rows_; }
  AlphaParams& alpha() { return alpha_; }
  const AlphaParams& alpha() const { return alpha_; }

  // Paths index members per row, 0-based.
  ForwardResult forward(const ad::Value& batch, ForwardMode mode, Rng& rng,
                        std::span<const std::size_t> path = {}) const;

  DiscreteNetwork extract_discrete(std::span<const std::size_t> path) const;

  // Neural network weights (everything except alpha').
  std::vector<ad::Value> weight_parameters() const;
  std::vector<std::pair<std::string, ad::Value>> named_weights() const;
  // Copies weights with matching names and shapes from `other`; returns how many.
  std::size_t carry_weights_from(const HyperArchitecture& other);
  void set_weights_trainable(bool on);

  std::size_t weight_count() const;
  std::string to_json() const;

 private:
  void check_path(std::span<const std::size_t> path) const;

  ArchConfig config_;
  std::vector<std::size_t> channels_;
  ConvParams stem_;
  std::vector<HyperCellRow> rows_;
  ad::Value classifier_weight_;
  ad::Value classifier_bias_;
  AlphaParams alpha_;
};

/// A chained network of concrete cells with its own weights.
class DiscreteNetwork {
 public:
  DiscreteNetwork(const ArchConfig& config, const std::vector<graph::Dag>& cells, Rng& rng);
  DiscreteNetwork(ConvParams stem, std::vector<CellSpec> cells, ad::Value classifier_weight,
                  ad::Value classifier_bias);

  ad::Value forward(const ad::Value& batch) const;
  std::vector<ad::Value> parameters() const;
  std::size_t parameter_count() const;
  const std::vector<CellSpec>& cells() const { return cells_; }
  std::size_t stem_parameter_count() const { return stem_.parameter_count(); }
  std::size_t classifier_parameter_count() const { return classifier_weight_.size() + classifier_bias_.size(); }

 private:
  ConvParams stem_;
  std::vector<CellSpec> cells_;
  ad::Value classifier_weight_;
  ad::Value classifier_bias_;
};

}  // namespace fade::arch
