#include "fade/hyperarch.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fade/error.hpp"
#include "fade/optim.hpp"

namespace fade::arch {
namespace {

using ad::Value;

class CellWeights : public EdgeWeights {
 public:
  explicit CellWeights(const CellSpec& cell) : cell_(cell) {}
  const ConvParams& at(const graph::Edge& e) const override {
    auto it = cell_.edge_ops.find(e);
    if (it == cell_.edge_ops.end()) throw InvalidGraphError("cell has no convolution on edge");
    return it->second;
  }

 private:
  const CellSpec& cell_;
};

// Stem conv + ReLU, rows separated by 2x2 max-pool and channel tiling, then
// global average pooling and a linear classifier.
template <typename RowFn>
Value trunk_forward(const ConvParams& stem, const std::vector<std::size_t>& channels, RowFn&& row_fn,
                    const Value& cls_w, const Value& cls_b, const Value& batch) {
  Value x = ad::relu(ad::conv2d(batch, stem.kernel, stem.bias));
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (i > 0) x = ad::tile_channels(ad::max_pool2d(x), channels[i]);
    x = row_fn(i, x);
  }
  return ad::linear(ad::global_avg_pool(x), cls_w, cls_b);
}

nlohmann::json dag_json(const graph::Dag& g) {
  auto edges = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({e.from, e.to});
  return {{"vertex_count", g.vertex_count()}, {"edges", edges}};
}

std::string edge_name(const graph::Edge& e) {
  return "edge" + std::to_string(e.from) + "_" + std::to_string(e.to);
}

}  // namespace

ConvParams ConvParams::clone() const { return {kernel.detach_as_parameter(), bias.detach_as_parameter()}; }

ConvParams make_conv(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  const std::size_t fan_in = in_channels * kKernelSize * kKernelSize;
  auto w = ad::kaiming_init(out_channels * fan_in, fan_in, rng);
  return {Value::parameter({out_channels, in_channels, kKernelSize, kKernelSize}, std::move(w)),
          Value::zeros({out_channels}, true)};
}

std::vector<int> CellSpec::sources() const {
  std::vector<int> out;
  auto indeg = dag.in_degrees();
  for (int v = 0; v < dag.vertex_count(); ++v)
    if (indeg[v] == 0) out.push_back(v);
  return out;
}

std::vector<int> CellSpec::sinks() const {
  std::vector<int> out;
  auto outdeg = dag.out_degrees();
  for (int v = 0; v < dag.vertex_count(); ++v)
    if (outdeg[v] == 0) out.push_back(v);
  return out;
}

std::size_t CellSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, op] : edge_ops) n += op.parameter_count();
  return n;
}

CellSpec embody(const graph::Dag& dag, std::size_t channels, Rng& rng) {
  for (const auto& e : dag.edges())
    if (e.from >= e.to) throw InvalidGraphError("embody expects a canonical DAG, got " + dag.to_string());
  CellSpec cell{dag, channels, {}};
  for (const auto& e : dag.edges()) cell.edge_ops.emplace(e, make_conv(channels, channels, rng));
  return cell;
}

Value cell_forward(const graph::Dag& dag, const EdgeWeights& weights, const Value& x) {
  const int n = dag.vertex_count();
  std::vector<std::vector<int>> preds(n);
  std::vector<bool> has_succ(n, false);
  for (const auto& e : dag.edges()) {
    preds[e.to].push_back(e.from);
    has_succ[e.from] = true;
  }
  std::vector<Value> vertex(n);
  for (int v = 0; v < n; ++v) {
    if (preds[v].empty()) {
      vertex[v] = x;  // fed by the input vertex; that edge has no operation
      continue;
    }
    std::vector<Value> terms;
    terms.reserve(preds[v].size());
    for (int u : preds[v]) {
      const ConvParams& op = weights.at({u, v});
      terms.push_back(ad::conv2d(vertex[u], op.kernel, op.bias));
    }
    vertex[v] = ad::relu(ad::add_n(terms));
  }
  std::vector<Value> sinks;
  for (int v = 0; v < n; ++v)
    if (!has_succ[v]) sinks.push_back(vertex[v]);
  return ad::relu(ad::add_n(sinks));
}

HyperCellRow::HyperCellRow(std::size_t channels, int gmax_vertices, std::vector<graph::Dag> members, Rng& rng)
    : channels_(channels), gmax_vertices_(gmax_vertices), members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("hyper-cell row needs at least one member");
  if (gmax_vertices_ < 1) throw ConfigError("G_max needs at least one vertex");
  for (const auto& m : members_) {
    if (m.vertex_count() > gmax_vertices_)
      throw ConfigError("member " + m.to_string() + " exceeds G_max with " + std::to_string(gmax_vertices_) +
                        " vertices");
    std::uint64_t mask = 0;
    for (const auto& e : m.edges()) {
      if (e.from >= e.to) throw InvalidGraphError("member is not in canonical form: " + m.to_string());
      mask |= std::uint64_t{1} << graph::pair_index(e.from, e.to, gmax_vertices_);
    }
    masks_.push_back(mask);
  }
  const int pairs = gmax_vertices_ * (gmax_vertices_ - 1) / 2;
  gmax_.reserve(pairs);
  for (int p = 0; p < pairs; ++p) gmax_.push_back(make_conv(channels_, channels_, rng));
}

const ConvParams& HyperCellRow::at(const graph::Edge& e) const {
  return gmax_.at(graph::pair_index(e.from, e.to, gmax_vertices_));
}

Value HyperCellRow::forward_member(std::size_t k, const Value& x) const {
  if (k >= members_.size()) throw BoundsError("member index " + std::to_string(k) + " out of range");
  return cell_forward(members_[k], *this, x);
}

std::size_t HyperCellRow::parameter_count() const {
  std::size_t n = 0;
  for (const auto& op : gmax_) n += op.parameter_count();
  return n;
}

std::size_t HyperCellRow::member_parameter_count(std::size_t k) const {
  std::size_t n = 0;
  for (const auto& e : members_.at(k).edges()) n += at(e).parameter_count();
  return n;
}

std::vector<std::vector<double>> AlphaParams::softmaxed() const {
  const std::size_t d = depth(), w = width();
  std::vector<std::vector<double>> out(d, std::vector<double>(w));
  const auto raw_data = raw.data();
  for (std::size_t i = 0; i < d; ++i) {
    const double* r = raw_data.data() + i * w;
    const double m = *std::max_element(r, r + w);
    double z = 0.0;
    for (std::size_t j = 0; j < w; ++j) z += (out[i][j] = std::exp(r[j] - m));
    for (std::size_t j = 0; j < w; ++j) out[i][j] /= z;
  }
  return out;
}

Value gumbel_softmax(const Value& x, double tau, Rng& rng, bool hard) {
  if (!(tau > 0.0)) throw ConfigError("gumbel_softmax temperature must be > 0");
  if (!x.defined() || x.shape().size() != 1) throw ShapeError("gumbel_softmax expects a 1-D value");
  const auto noise = ad::gumbel_sample(x.size(), rng);
  Value soft = ad::softmax(ad::scale(ad::add_constant(x, noise), 1.0 / tau));
  return hard ? ad::straight_through_onehot(soft) : soft;
}

std::vector<std::size_t> channel_schedule(std::size_t depth, std::size_t deepest) {
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (deepest < 1) throw ConfigError("deepest channel count must be >= 1");
  std::vector<std::size_t> ch(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t shift = depth - 1 - i;
    ch[i] = std::max<std::size_t>(1, shift >= 63 ? 0 : deepest >> shift);
  }
  return ch;
}

HyperArchitecture::HyperArchitecture(const ArchConfig& config, const std::vector<std::vector<graph::Dag>>& rows,
                                     Rng& rng)
    : config_(config) {
  if (rows.empty()) throw ConfigError("hyper-architecture needs depth >= 1");
  for (const auto& r : rows)
    if (r.size() != rows.front().size() || r.empty())
      throw ConfigError("hyper-architecture rows must share one width >= 1");
  if (!(config.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  channels_ = channel_schedule(rows.size(), config.deepest_channels);
  stem_ = make_conv(config.input_channels, channels_.front(), rng);
  rows_.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows_.emplace_back(channels_[i], config.gmax_vertices, rows[i], rng);
  classifier_weight_ = Value::parameter({config.classes, channels_.back()},
                                        ad::kaiming_init(config.classes * channels_.back(), channels_.back(), rng));
  classifier_bias_ = Value::zeros({config.classes}, true);

  std::normal_distribution<double> init(0.0, config.alpha_init_std);
  std::vector<double> a(rows.size() * rows.front().size());
  for (auto& v : a) v = config.alpha_init_std > 0.0 ? init(rng) : 0.0;
  alpha_.raw = Value::parameter({rows.size(), rows.front().size()}, std::move(a));
  alpha_.temperature = config.temperature;
}

std::size_t HyperArchitecture::path_count() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < depth(); ++i) n *= width();
  return n;
}

void HyperArchitecture::check_path(std::span<const std::size_t> path) const {
  if (path.size() != depth())
    throw BoundsError("path has " + std::to_string(path.size()) + " entries for depth " + std::to_string(depth()));
  for (auto k : path)
    if (k >= width()) throw BoundsError("path index " + std::to_string(k) + " out of range for width " +
                                        std::to_string(width()));
}

ForwardResult HyperArchitecture::forward(const Value& batch, ForwardMode mode, Rng& rng,
                                         std::span<const std::size_t> path) const {
  ForwardResult result;
  if (mode == ForwardMode::kFixedPath) check_path(path);
  auto row_fn = [&](std::size_t i, const Value& x) -> Value {
    const HyperCellRow& r = rows_[i];
    switch (mode) {
      case ForwardMode::kFixedPath:
        result.selected.push_back(path[i]);
        return r.forward_member(path[i], x);
      case ForwardMode::kGumbelHard: {
        Value hard = gumbel_softmax(ad::row(alpha_.raw, i), alpha_.temperature, rng, true);
        const std::size_t k = ad::argmax(hard.data());
        result.selected.push_back(k);
        result.row_gates.push_back(hard);
        if (!alpha_.raw.requires_grad()) return ad::gate(r.forward_member(k, x), hard, k);
        // Unselected members are gated by an exact zero but still evaluated,
        // so every alpha entry sees its member's straight-through gradient.
        std::vector<Value> terms;
        for (std::size_t m = 0; m < r.width(); ++m) terms.push_back(ad::gate(r.forward_member(m, x), hard, m));
        return ad::add_n(terms);
      }
      case ForwardMode::kSoftmaxMix: {
        Value weights = ad::softmax(ad::row(alpha_.raw, i));
        result.row_gates.push_back(weights);
        std::vector<Value> terms;
        for (std::size_t k = 0; k < r.width(); ++k) terms.push_back(ad::gate(r.forward_member(k, x), weights, k));
        return ad::add_n(terms);
      }
    }
    throw ConfigError("unknown forward mode");
  };
  result.logits = trunk_forward(stem_, channels_, row_fn, classifier_weight_, classifier_bias_, batch);
  return result;
}

DiscreteNetwork HyperArchitecture::extract_discrete(std::span<const std::size_t> path) const {
  check_path(path);
  std::vector<CellSpec> cells;
  for (std::size_t i = 0; i < depth(); ++i) {
    const auto& member = rows_[i].members()[path[i]];
    CellSpec cell{member, channels_[i], {}};
    for (const auto& e : member.edges()) cell.edge_ops.emplace(e, rows_[i].at(e).clone());
    cells.push_back(std::move(cell));
  }
  return DiscreteNetwork(stem_.clone(), std::move(cells), classifier_weight_.detach_as_parameter(),
                         classifier_bias_.detach_as_parameter());
}

std::vector<std::pair<std::string, Value>> HyperArchitecture::named_weights() const {
  std::vector<std::pair<std::string, Value>> out;
  out.emplace_back("stem.kernel", stem_.kernel);
  out.emplace_back("stem.bias", stem_.bias);
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const int n = rows_[i].gmax_vertices();
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) {
        const auto& op = rows_[i].at({u, v});
        const std::string prefix = "row" + std::to_string(i) + "." + edge_name({u, v});
        out.emplace_back(prefix + ".kernel", op.kernel);
        out.emplace_back(prefix + ".bias", op.bias);
      }
  }
  out.emplace_back("classifier.weight", classifier_weight_);
  out.emplace_back("classifier.bias", classifier_bias_);
  return out;
}

std::vector<Value> HyperArchitecture::weight_parameters() const {
  std::vector<Value> out;
  for (auto& [_, v] : named_weights()) out.push_back(v);
  return out;
}

std::size_t HyperArchitecture::carry_weights_from(const HyperArchitecture& other) {
  std::map<std::string, Value> source;
  for (auto& [name, v] : other.named_weights()) source.emplace(name, v);
  std::size_t copied = 0;
  for (auto& [name, v] : named_weights()) {
    auto it = source.find(name);
    if (it == source.end() || it->second.shape() != v.shape()) continue;
    auto dst = v.mutable_data();
    std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
    ++copied;
  }
  return copied;
}

void HyperArchitecture::set_weights_trainable(bool on) {
  for (auto& v : weight_parameters()) v.set_requires_grad(on);
}

std::size_t HyperArchitecture::weight_count() const {
  std::size_t n = 0;
  for (const auto& v : weight_parameters()) n += v.size();
  return n;
}

std::string HyperArchitecture::to_json() const {
  nlohmann::json j;
  j["depth"] = depth();
  j["width"] = width();
  j["channels"] = channels_;
  j["gmax_vertices"] = config_.gmax_vertices;
  j["temperature"] = alpha_.temperature;
  auto rows = nlohmann::json::array();
  for (const auto& r : rows_) {
    auto members = nlohmann::json::array();
    for (const auto& m : r.members()) members.push_back(dag_json(m));
    rows.push_back({{"channels", r.channels()}, {"members", members}});
  }
  j["rows"] = rows;
  std::vector<std::vector<double>> raw(depth(), std::vector<double>(width()));
  for (std::size_t i = 0; i < depth(); ++i)
    for (std::size_t k = 0; k < width(); ++k) raw[i][k] = alpha_.raw.data()[i * width() + k];
  j["alpha_raw"] = raw;
  j["alpha_softmax"] = alpha_.softmaxed();
  return j.dump(2);
}

DiscreteNetwork::DiscreteNetwork(const ArchConfig& config, const std::vector<graph::Dag>& cells, Rng& rng) {
  if (cells.empty()) throw ConfigError("discrete network needs at least one cell");
  const auto channels = channel_schedule(cells.size(), config.deepest_channels);
  stem_ = make_conv(config.input_channels, channels.front(), rng);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].vertex_count() > config.gmax_vertices)
      throw ConfigError("cell " + cells[i].to_string() + " exceeds the configured vertex bound");
    cells_.push_back(embody(cells[i], channels[i], rng));
  }
  classifier_weight_ = Value::parameter({config.classes, channels.back()},
                                        ad::kaiming_init(config.classes * channels.back(), channels.back(), rng));
  classifier_bias_ = Value::zeros({config.classes}, true);
}

DiscreteNetwork::DiscreteNetwork(ConvParams stem, std::vector<CellSpec> cells, Value classifier_weight,
                                 Value classifier_bias)
    : stem_(std::move(stem)),
      cells_(std::move(cells)),
      classifier_weight_(std::move(classifier_weight)),
      classifier_bias_(std::move(classifier_bias)) {}

Value DiscreteNetwork::forward(const Value& batch) const {
  std::vector<std::size_t> channels;
  for (const auto& c : cells_) channels.push_back(c.channels);
  auto row_fn = [&](std::size_t i, const Value& x) { return cell_forward(cells_[i].dag, CellWeights(cells_[i]), x); };
  return trunk_forward(stem_, channels, row_fn, classifier_weight_, classifier_bias_, batch);
}

std::vector<Value> DiscreteNetwork::parameters() const {
  std::vector<Value> out{stem_.kernel, stem_.bias};
  for (const auto& c : cells_)
    for (const auto& [_, op] : c.edge_ops) {
      out.push_back(op.kernel);
      out.push_back(op.bias);
    }
  out.push_back(classifier_weight_);
  out.push_back(classifier_bias_);
  return out;
}

std::size_t DiscreteNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

}  // namespace fade::arch
