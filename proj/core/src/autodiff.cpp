#include "fade/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "fade/error.hpp"

namespace fade::ad {
namespace {

using NodePtr = std::shared_ptr<Node>;

// Builds the output node. History (inputs + backward) is attached only when
// some input needs a gradient.
Value make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backward, const char* op) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Value(std::move(node));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_rank(const Value& v, std::size_t rank, const char* op) {
  require(v.defined(), std::string(op) + ": undefined input");
  require(v.shape().size() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(v.shape()));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void check_finite(std::span<const double> xs, const char* where) {
  for (double x : xs)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + where);
}

Value Value::constant(Shape shape, std::vector<double> data) {
  require(numel(shape) == data.size(), "constant: data size does not match " + shape_string(shape));
  check_finite(data, "constant");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Value(std::move(node));
}

Value Value::parameter(Shape shape, std::vector<double> data) {
  Value v = constant(std::move(shape), std::move(data));
  v.set_requires_grad(true);
  return v;
}

Value Value::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(numel(shape), 0.0);
  Value v = constant(std::move(shape), std::move(data));
  v.set_requires_grad(requires_grad);
  return v;
}

Value Value::scalar(double v, bool requires_grad) {
  Value out = constant({1}, {v});
  out.set_requires_grad(requires_grad);
  return out;
}

double Value::item() const {
  require(size() == 1, "item() on a value with " + std::to_string(size()) + " elements");
  return node_->data[0];
}

Value Value::detach() const { return constant(node_->shape, node_->data); }

Value Value::detach_as_parameter() const { return parameter(node_->shape, node_->data); }

void Value::backward() const {
  require(size() == 1, "backward() needs a single-element value");
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order of the live subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child && child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Value conv2d(const Value& input, const Value& kernel, const Value& bias) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = kernel.dim(0), K = kernel.dim(2);
  require(kernel.dim(1) == C, "conv2d: kernel " + shape_string(kernel.shape()) + " vs input " +
                                  shape_string(input.shape()));
  require(kernel.dim(3) == K && K % 2 == 1, "conv2d: kernel must be square with odd size");
  if (bias.defined()) require(bias.shape() == Shape{O}, "conv2d: bias shape " + shape_string(bias.shape()));
  const long P = static_cast<long>(K / 2);
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W), Kl = static_cast<long>(K);

  const auto in = input.data();
  const auto w = kernel.data();
  std::vector<double> out(N * O * H * W, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      double* op = out.data() + (n * O + o) * H * W;
      if (bias.defined()) std::fill(op, op + H * W, bias.data()[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* ip = in.data() + (n * C + c) * H * W;
        const double* wp = w.data() + (o * C + c) * K * K;
        for (long ky = 0; ky < Kl; ++ky) {
          const long y0 = std::max(0L, P - ky), y1 = std::min(Hl, Hl + P - ky);
          for (long kx = 0; kx < Kl; ++kx) {
            const double wv = wp[ky * Kl + kx];
            const long x0 = std::max(0L, P - kx), x1 = std::min(Wl, Wl + P - kx);
            for (long y = y0; y < y1; ++y) {
              double* orow = op + y * Wl;
              const double* irow = ip + (y + ky - P) * Wl + (kx - P);
              for (long x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }

  std::vector<NodePtr> inputs{input.node(), kernel.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result(
      {N, O, H, W}, std::move(out), std::move(inputs),
      [=](Node& self) {
        Node& xin = *self.inputs[0];
        Node& ker = *self.inputs[1];
        const double* g = self.grad.data();
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->ensure_grad();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
              const double* gp = g + (n * O + o) * H * W;
              double s = 0.0;
              for (std::size_t i = 0; i < H * W; ++i) s += gp[i];
              gb[o] += s;
            }
        }
        double* gx = xin.requires_grad ? xin.ensure_grad().data() : nullptr;
        double* gw = ker.requires_grad ? ker.ensure_grad().data() : nullptr;
        if (!gx && !gw) return;
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) {
            const double* gp = g + (n * O + o) * H * W;
            for (std::size_t c = 0; c < C; ++c) {
              const double* ip = xin.data.data() + (n * C + c) * H * W;
              double* gip = gx ? gx + (n * C + c) * H * W : nullptr;
              const double* wp = ker.data.data() + (o * C + c) * K * K;
              double* gwp = gw ? gw + (o * C + c) * K * K : nullptr;
              for (long ky = 0; ky < Kl; ++ky) {
                const long y0 = std::max(0L, P - ky), y1 = std::min(Hl, Hl + P - ky);
                for (long kx = 0; kx < Kl; ++kx) {
                  const long x0 = std::max(0L, P - kx), x1 = std::min(Wl, Wl + P - kx);
                  const double wv = wp[ky * Kl + kx];
                  double acc = 0.0;
                  for (long y = y0; y < y1; ++y) {
                    const double* grow = gp + y * Wl;
                    const long off = (y + ky - P) * Wl + (kx - P);
                    if (gip) {
                      double* girow = gip + off;
                      for (long x = x0; x < x1; ++x) girow[x] += wv * grow[x];
                    }
                    if (gwp) {
                      const double* irow = ip + off;
                      for (long x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                    }
                  }
                  if (gwp) gwp[ky * Kl + kx] += acc;
                }
              }
            }
          }
        }
      },
      "conv2d");
}

Value linear(const Value& input, const Value& weight, const Value& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t N = input.dim(0), I = input.dim(1), O = weight.dim(0);
  require(weight.dim(1) == I, "linear: weight " + shape_string(weight.shape()) + " vs input " +
                                  shape_string(input.shape()));
  if (bias.defined()) require(bias.shape() == Shape{O}, "linear: bias shape " + shape_string(bias.shape()));
  const auto x = input.data();
  const auto w = weight.data();
  std::vector<double> out(N * O);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      double s = bias.defined() ? bias.data()[o] : 0.0;
      for (std::size_t i = 0; i < I; ++i) s += w[o * I + i] * x[n * I + i];
      out[n * O + o] = s;
    }
  std::vector<NodePtr> inputs{input.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result(
      {N, O}, std::move(out), std::move(inputs),
      [=](Node& self) {
        Node& xin = *self.inputs[0];
        Node& win = *self.inputs[1];
        const auto& g = self.grad;
        if (xin.requires_grad) {
          auto& gx = xin.ensure_grad();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t i = 0; i < I; ++i) gx[n * I + i] += g[n * O + o] * win.data[o * I + i];
        }
        if (win.requires_grad) {
          auto& gw = win.ensure_grad();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t i = 0; i < I; ++i) gw[o * I + i] += g[n * O + o] * xin.data[n * I + i];
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->ensure_grad();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) gb[o] += g[n * O + o];
        }
      },
      "linear");
}

Value relu(const Value& x) {
  require(x.defined(), "relu: undefined input");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(x.shape(), std::move(out), {x.node()},
                     [](Node& self) {
                       Node& in = *self.inputs[0];
                       auto& gi = in.ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i)
                         if (in.data[i] > 0.0) gi[i] += self.grad[i];
                     },
                     "relu");
}

Value max_pool2d(const Value& x) {
  require_rank(x, 4, "max_pool2d");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H / 2, Wo = W / 2;
  require(Ho > 0 && Wo > 0, "max_pool2d: input too small " + shape_string(x.shape()));
  const auto in = x.data();
  std::vector<double> out(N * C * Ho * Wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        std::size_t best = nc * H * W + (2 * y) * W + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            std::size_t idx = nc * H * W + (2 * y + dy) * W + 2 * xx + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = nc * Ho * Wo + y * Wo + xx;
        out[o] = in[best];
        argmax[o] = best;
      }
  return make_result({N, C, Ho, Wo}, std::move(out), {x.node()},
                     [argmax = std::move(argmax)](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t o = 0; o < argmax.size(); ++o) gi[argmax[o]] += self.grad[o];
                     },
                     "max_pool2d");
}

Value global_avg_pool(const Value& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const auto in = x.data();
  std::vector<double> out(N * C);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += in[nc * HW + i];
    out[nc] = s / static_cast<double>(HW);
  }
  return make_result({N, C}, std::move(out), {x.node()},
                     [HW](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       const double inv = 1.0 / static_cast<double>(HW);
                       for (std::size_t nc = 0; nc < self.grad.size(); ++nc)
                         for (std::size_t i = 0; i < HW; ++i) gi[nc * HW + i] += self.grad[nc] * inv;
                     },
                     "global_avg_pool");
}

Value add(const Value& a, const Value& b) {
  require(a.defined() && b.defined(), "add: undefined input");
  require(a.shape() == b.shape(), "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [](Node& self) {
                       for (auto& in : self.inputs) {
                         if (!in->requires_grad) continue;
                         auto& gi = in->ensure_grad();
                         for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
                       }
                     },
                     "add");
}

Value add_n(const std::vector<Value>& terms) {
  require(!terms.empty(), "add_n: no terms");
  if (terms.size() == 1) return terms.front();
  std::vector<double> out(terms[0].data().begin(), terms[0].data().end());
  std::vector<NodePtr> inputs{terms[0].node()};
  for (std::size_t t = 1; t < terms.size(); ++t) {
    require(terms[t].shape() == terms[0].shape(), "add_n: shape mismatch " + shape_string(terms[t].shape()) +
                                                      " vs " + shape_string(terms[0].shape()));
    const auto d = terms[t].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    inputs.push_back(terms[t].node());
  }
  return make_result(terms[0].shape(), std::move(out), std::move(inputs),
                     [](Node& self) {
                       for (auto& in : self.inputs) {
                         if (!in->requires_grad) continue;
                         auto& gi = in->ensure_grad();
                         for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
                       }
                     },
                     "add_n");
}

Value scale(const Value& x, double factor) {
  require(x.defined(), "scale: undefined input");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x.node()},
                     [factor](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += factor * self.grad[i];
                     },
                     "scale");
}

Value add_constant(const Value& x, std::span<const double> offset) {
  require(x.defined() && offset.size() == x.size(), "add_constant: size mismatch");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += offset[i];
  return make_result(x.shape(), std::move(out), {x.node()},
                     [](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
                     },
                     "add_constant");
}

Value softmax(const Value& x) {
  require(x.defined() && (x.shape().size() == 1 || x.shape().size() == 2),
          "softmax: expected a 1-D or 2-D value");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  const auto in = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ip = in.data() + r * cols;
    double* op = out.data() + r * cols;
    const double m = *std::max_element(ip, ip + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (op[c] = std::exp(ip[c] - m));
    for (std::size_t c = 0; c < cols; ++c) op[c] /= z;
  }
  return make_result(x.shape(), std::move(out), {x.node()},
                     [rows, cols](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += y[c] * g[c];
                         for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += y[c] * (g[c] - dot);
                       }
                     },
                     "softmax");
}

Value cross_entropy(const Value& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy logits");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  require(labels.size() == N, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                  std::to_string(N) + " rows");
  const auto in = logits.data();
  std::vector<double> probs(N * K);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw BoundsError("cross_entropy: label out of range");
    const double* ip = in.data() + n * K;
    const double m = *std::max_element(ip, ip + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += (probs[n * K + k] = std::exp(ip[k] - m));
    for (std::size_t k = 0; k < K; ++k) probs[n * K + k] /= z;
    loss += -(ip[y] - m - std::log(z));
  }
  loss /= static_cast<double>(N);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result({1}, {loss}, {logits.node()},
                     [N, K, probs = std::move(probs), ys = std::move(ys)](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       const double s = self.grad[0] / static_cast<double>(N);
                       for (std::size_t n = 0; n < N; ++n)
                         for (std::size_t k = 0; k < K; ++k) {
                           const double t = static_cast<int>(k) == ys[n] ? 1.0 : 0.0;
                           gi[n * K + k] += s * (probs[n * K + k] - t);
                         }
                     },
                     "cross_entropy");
}

Value max_norm(const Value& x) {
  require(x.defined() && x.size() > 0, "max_norm: empty input");
  const auto in = x.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < in.size(); ++i)
    if (std::abs(in[i]) > std::abs(in[best])) best = i;
  const double sign = in[best] >= 0.0 ? 1.0 : -1.0;
  return make_result({1}, {std::abs(in[best])}, {x.node()},
                     [best, sign](Node& self) { self.inputs[0]->ensure_grad()[best] += sign * self.grad[0]; },
                     "max_norm");
}

Value row(const Value& x, std::size_t i) {
  require_rank(x, 2, "row");
  const std::size_t cols = x.dim(1);
  if (i >= x.dim(0)) throw BoundsError("row index " + std::to_string(i) + " out of range");
  std::vector<double> out(x.data().begin() + i * cols, x.data().begin() + (i + 1) * cols);
  return make_result({cols}, std::move(out), {x.node()},
                     [i, cols](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t c = 0; c < cols; ++c) gi[i * cols + c] += self.grad[c];
                     },
                     "row");
}

Value tile_channels(const Value& x, std::size_t out_channels) {
  require_rank(x, 4, "tile_channels");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  require(out_channels >= 1, "tile_channels: out_channels must be positive");
  if (out_channels == C) return x;
  const auto in = x.data();
  std::vector<double> out(N * out_channels * HW);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < out_channels; ++c)
      std::copy_n(in.data() + (n * C + c % C) * HW, HW, out.data() + (n * out_channels + c) * HW);
  return make_result({N, out_channels, x.dim(2), x.dim(3)}, std::move(out), {x.node()},
                     [N, C, HW, out_channels](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t n = 0; n < N; ++n)
                         for (std::size_t c = 0; c < out_channels; ++c) {
                           const double* g = self.grad.data() + (n * out_channels + c) * HW;
                           double* t = gi.data() + (n * C + c % C) * HW;
                           for (std::size_t i = 0; i < HW; ++i) t[i] += g[i];
                         }
                     },
                     "tile_channels");
}

Value gate(const Value& x, const Value& weights, std::size_t k) {
  require(x.defined() && weights.defined(), "gate: undefined input");
  if (k >= weights.size()) throw BoundsError("gate index " + std::to_string(k) + " out of range");
  const double wk = weights.data()[k];
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= wk;
  return make_result(x.shape(), std::move(out), {x.node(), weights.node()},
                     [k](Node& self) {
                       Node& xin = *self.inputs[0];
                       Node& win = *self.inputs[1];
                       const double wk = win.data[k];
                       if (xin.requires_grad) {
                         auto& gx = xin.ensure_grad();
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += wk * self.grad[i];
                       }
                       if (win.requires_grad) {
                         double dot = 0.0;
                         for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * xin.data[i];
                         win.ensure_grad()[k] += dot;
                       }
                     },
                     "gate");
}

std::size_t argmax(std::span<const double> xs) {
  if (xs.empty()) throw ShapeError("argmax of an empty range");
  return static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

Value straight_through_onehot(const Value& soft) {
  require_rank(soft, 1, "straight_through_onehot");
  std::vector<double> out(soft.size(), 0.0);
  out[argmax(soft.data())] = 1.0;
  return make_result(soft.shape(), std::move(out), {soft.node()},
                     [](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
                     },
                     "straight_through_onehot");
}

}  // namespace fade::ad
