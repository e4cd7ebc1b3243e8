#pragma once

// Property checks run by both the unit suite (small instances) and the
// acceptance binary (pinned sizes).

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fade/fade_rank.hpp"
#include "fade/graph_space.hpp"
#include "fade/hyperarch.hpp"
#include "fade/random.hpp"

namespace fade::testing {

// Empirical mean of the hard Gumbel-Softmax one-hot.
inline std::vector<double> hard_gumbel_frequencies(const std::vector<double>& x, double tau, std::size_t draws,
                                                   Rng& rng) {
  const auto v = ad::Value::constant({x.size()}, x);
  std::vector<double> freq(x.size(), 0.0);
  for (std::size_t i = 0; i < draws; ++i) {
    const auto h = arch::gumbel_softmax(v, tau, rng, true);
    const auto d = h.data();
    for (std::size_t k = 0; k < d.size(); ++k) freq[k] += d[k];
  }
  for (auto& f : freq) f /= static_cast<double>(draws);
  return freq;
}

inline std::vector<double> softmax_of(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (out[i] = std::exp(x[i] - m));
  for (auto& v : out) v /= z;
  return out;
}

inline rank::AlphaMatrix random_simplex(std::size_t d, std::size_t w, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  rank::AlphaMatrix a(d, std::vector<double>(w));
  for (auto& row : a) {
    double s = 0.0;
    for (auto& v : row) s += (v = e(rng));
    for (auto& v : row) v /= s;
  }
  return a;
}

// Path with the largest product by exhaustive odometer enumeration,
// independent of rank::all_paths; ties keep the first in lexicographic order.
inline rank::Path brute_force_best_path(const rank::AlphaMatrix& a) {
  const std::size_t d = a.size(), w = a.front().size();
  rank::Path cur(d, 0), best = cur;
  double best_score = -1.0;
  while (true) {
    double s = 1.0;
    for (std::size_t i = 0; i < d; ++i) s *= a[i][cur[i]];
    if (s > best_score) best_score = s, best = cur;
    std::size_t i = d;
    while (i > 0 && ++cur[i - 1] == w) cur[--i] = 0;
    if (i == 0) break;
  }
  return best;
}

// Member DAGs drawn from the enumerated space for a d x w hyper-architecture.
inline std::vector<std::vector<graph::Dag>> random_rows(std::size_t d, std::size_t w, int max_vertices, Rng& rng) {
  const auto dags = graph::enumerate_dags(max_vertices);
  std::uniform_int_distribution<std::size_t> pick(0, dags.size() - 1);
  std::vector<std::vector<graph::Dag>> rows(d);
  for (auto& r : rows)
    for (std::size_t k = 0; k < w; ++k) r.push_back(dags[pick(rng)]);
  return rows;
}

struct EquivalenceResult {
  std::size_t paths = 0;
  std::size_t exact = 0;
};

// Fixed-path forward of H against the extracted discrete network, compared
// bit for bit on one random batch per path.
inline EquivalenceResult fixed_path_equivalence(std::size_t d, std::size_t w, std::size_t paths, std::uint64_t seed) {
  Rng rng(seed);
  arch::ArchConfig cfg;
  cfg.deepest_channels = 4 << (d - 1);
  cfg.gmax_vertices = 5;
  const auto rows = random_rows(d, w, 5, rng);
  arch::HyperArchitecture h(cfg, rows, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> member(0, w - 1);
  EquivalenceResult r;
  for (std::size_t p = 0; p < paths; ++p) {
    std::vector<std::size_t> path(d);
    for (auto& k : path) k = member(rng);
    std::vector<double> pixels(2 * 8 * 8);
    for (auto& v : pixels) v = u(rng);
    const auto batch = ad::Value::constant({2, 1, 8, 8}, pixels);
    const auto a = h.forward(batch, arch::ForwardMode::kFixedPath, rng, path).logits;
    const auto b = h.extract_discrete(path).forward(batch);
    ++r.paths;
    r.exact += std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
  }
  return r;
}

}  // namespace fade::testing
