#include <doctest.h>

#include <cmath>
#include <set>

#include "fade/data.hpp"
#include "fade/error.hpp"
#include "fade/gp.hpp"
#include "fade/outer_search.hpp"

using namespace fade;
using namespace fade::search;

namespace {

const graph::FeatureGrid& grid() {
  static const auto g = graph::build_grid(graph::enumerate_dags(5), 8);
  return g;
}

double distance(const FeaturePoint& a, const FeaturePoint& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

double max_coord_gap(const FeaturePoint& a, const FeaturePoint& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < 3; ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

const data::ConcaveOracle kOracle{};

OracleBetaSource oracle_beta() {
  return OracleBetaSource([](std::size_t, const FeaturePoint& p) { return kOracle(p); }, 0.05);
}

}  // namespace

TEST_CASE("source points") {
  SUBCASE("corner anchors clamp but keep seven members") {
    const auto s = source_points({{0.0, 0.0, 1.0}}, 0.1);
    CHECK(s.size() == 7);
    CHECK(s[1] == FeaturePoint{{0.1, 0.0, 1.0}});
    CHECK(s[2] == FeaturePoint{{0.0, 0.0, 1.0}});
    CHECK(s[5] == FeaturePoint{{0.0, 0.0, 1.0}});
    CHECK(s[6] == FeaturePoint{{0.0, 0.0, 0.9}});
  }
  SUBCASE("zero width collapses onto the anchor") {
    Rng rng(1);
    const FeaturePoint a{{0.4, 0.3, 0.7}};
    const auto row = propose_row(a, 0.0, grid(), rng);
    const auto bucket = grid().resolve(a);
    for (const auto& p : row.sources) CHECK(p == a);
    for (const auto& m : row.members) CHECK(grid().interval(graph::embed(m, grid().norm())) == bucket);
  }
  SUBCASE("a singleton bucket yields seven copies") {
    Rng rng(2);
    for (const auto& [index, graphs] : grid().buckets()) {
      if (graphs.size() != 1) continue;
      const auto row = propose_row(grid().bucket_center(index), 0.0, grid(), rng);
      REQUIRE(row.members.size() == 7);
      for (const auto& m : row.members) CHECK(m == graphs.front());
      break;
    }
  }
  SUBCASE("negative width is rejected") {
    Rng rng(3);
    CHECK_THROWS_AS(propose_row({{0.5, 0.5, 0.5}}, -0.1, grid(), rng), ConfigError);
  }
}

TEST_CASE("anchor update") {
  const FeaturePoint m{{0.5, 0.5, 0.5}};
  const std::vector<double> equal{0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4};
  CHECK(update_anchor(m, equal, 0.1) == m);

  const std::vector<double> beta{0.0, 0.8, 0.2, 0.5, 0.5, 0.3, 0.3};
  const auto up = update_anchor(m, beta, 0.1, StepSign::kAscent);
  CHECK(up[0] == doctest::Approx(0.56));
  CHECK(up[1] == 0.5);
  CHECK(up[2] == 0.5);
  const auto down = update_anchor(m, beta, 0.1, StepSign::kDescentAsWritten);
  CHECK(down[0] == doctest::Approx(0.44));
  CHECK(down[1] == 0.5);

  const std::vector<double> big{0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  CHECK(update_anchor({{0.9, 0.5, 0.5}}, big, 0.25)[0] == 1.0);
  CHECK_THROWS_AS(update_anchor(m, std::vector<double>{0.5, 0.5}, 0.1), ShapeError);
}

TEST_CASE("anchor moves are bounded by lambda") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const FeaturePoint a{{u(rng), u(rng), u(rng)}};
    std::vector<double> beta(7);
    for (auto& b : beta) b = u(rng);
    CHECK(max_coord_gap(update_anchor(a, beta, 0.3), a) <= 0.3 + 1e-15);
  }
}

TEST_CASE("oracle beta is a softmax over the sources") {
  auto src = oracle_beta();
  Rng rng(5);
  const std::vector<RowProposal> rows{propose_row({{0.2, 0.5, 0.9}}, 0.125, grid(), rng)};
  const auto beta = src.evaluate(rows, rng);
  REQUIRE(beta.size() == 1);
  REQUIRE(beta[0].size() == 7);
  double s = 0.0;
  for (double b : beta[0]) s += b;
  CHECK(s == doctest::Approx(1.0));
  // Moving x towards 0.5 helps, so +e1 outweighs -e1.
  CHECK(beta[0][1] > beta[0][2]);
  CHECK_THROWS_AS(OracleBetaSource([](std::size_t, const FeaturePoint&) { return 0.0; }, 0.0), ConfigError);
}

TEST_CASE("one outer epoch") {
  auto src = oracle_beta();
  Rng rng(6);
  SearchConfig cfg;
  cfg.depth = 2;
  cfg.outer_epochs = 1;
  cfg.lambda = 0.25;
  cfg.initial_anchors = {{{0.1, 0.9, 0.3}}, {{0.6, 0.2, 0.8}}};
  const auto t = run_search(cfg, grid(), src, rng);
  CHECK(t.size() == 1);
  CHECK(t.epochs[0].outer_epoch == 1);
  CHECK(t.epochs[0].anchors == cfg.initial_anchors);
  for (std::size_t i = 0; i < 2; ++i) CHECK(max_coord_gap(t.final_anchors[i], cfg.initial_anchors[i]) <= 0.25);
}

TEST_CASE("the search loop reproduces a hand-rolled finite-difference ascent") {
  auto src = oracle_beta();
  Rng rng(7);
  SearchConfig cfg;
  cfg.depth = 1;
  cfg.outer_epochs = 12;
  cfg.gamma = 0.125;
  cfg.lambda = 0.25;
  cfg.initial_anchors = {{{0.05, 0.95, 0.2}}};
  const auto t = run_search(cfg, grid(), src, rng);

  FeaturePoint m = cfg.initial_anchors[0];
  for (std::size_t e = 0; e < cfg.outer_epochs; ++e) {
    CHECK(t.epochs[e].anchors[0] == m);
    std::array<double, 7> f{};
    std::array<FeaturePoint, 7> pts{};
    pts[0] = m;
    for (std::size_t k = 0; k < 3; ++k) {
      pts[1 + 2 * k] = m;
      pts[2 + 2 * k] = m;
      pts[1 + 2 * k][k] = std::min(1.0, m[k] + cfg.gamma);
      pts[2 + 2 * k][k] = std::max(0.0, m[k] - cfg.gamma);
    }
    double top = -1e300, z = 0.0;
    for (std::size_t j = 0; j < 7; ++j) top = std::max(top, f[j] = kOracle(pts[j]) / 0.05);
    for (auto& v : f) z += (v = std::exp(v - top));
    for (auto& v : f) v /= z;
    for (std::size_t k = 0; k < 3; ++k) m[k] = std::clamp(m[k] + cfg.lambda * (f[1 + 2 * k] - f[2 + 2 * k]), 0.0, 1.0);
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(t.final_anchors[0][k] == doctest::Approx(m[k]).epsilon(1e-14));
}

TEST_CASE("oracle search converges to the planted optimum") {
  std::size_t hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto src = oracle_beta();
    Rng rng(seed);
    SearchConfig cfg;
    cfg.depth = 2;
    cfg.outer_epochs = 50;
    const auto t = run_search(cfg, grid(), src, rng);
    bool ok = true;
    for (const auto& a : t.final_anchors) ok = ok && max_coord_gap(a, kOracle.optimum) <= 0.1;
    hits += ok;
  }
  CHECK(hits >= 4);
}

TEST_CASE("cells are independent: permuting a symmetric oracle permutes trajectories") {
  SearchConfig cfg;
  cfg.depth = 3;
  cfg.outer_epochs = 15;
  const std::vector<FeaturePoint> anchors{{{0.1, 0.2, 0.3}}, {{0.9, 0.8, 0.1}}, {{0.5, 0.0, 1.0}}};
  const std::vector<std::size_t> perm{2, 0, 1};
  auto run = [&](const std::vector<FeaturePoint>& start) {
    auto src = oracle_beta();
    Rng rng(8);
    cfg.initial_anchors = start;
    return run_search(cfg, grid(), src, rng);
  };
  const auto a = run(anchors);
  std::vector<FeaturePoint> permuted;
  for (auto p : perm) permuted.push_back(anchors[p]);
  const auto b = run(permuted);
  for (std::size_t e = 0; e < cfg.outer_epochs; ++e)
    for (std::size_t i = 0; i < 3; ++i) CHECK(b.epochs[e].anchors[i] == a.epochs[e].anchors[perm[i]]);
}

TEST_CASE("evaluation schedule") {
  SearchConfig cfg;
  cfg.outer_epochs = 12;
  cfg.eval_every = 5;
  std::vector<std::size_t> got;
  for (std::size_t t = 1; t <= 12; ++t)
    if (evaluates_epoch(cfg, t)) got.push_back(t);
  CHECK(got == std::vector<std::size_t>{1, 5, 10, 12});
  cfg.eval_every = 0;
  CHECK_FALSE(evaluates_epoch(cfg, 1));

  auto src = oracle_beta();
  Rng rng(9);
  cfg.eval_every = 5;
  cfg.depth = 1;
  const auto t = run_search(cfg, grid(), src, rng, oracle_evaluator(kOracle));
  for (const auto& e : t.epochs) {
    CHECK(e.evaluation.has_value() == evaluates_epoch(cfg, e.outer_epoch));
    if (e.evaluation) CHECK(e.evaluation->median == doctest::Approx(kOracle(e.anchors[0])));
  }
}

TEST_CASE("median") {
  CHECK(median({0.7}) == 0.7);
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median({}), ConfigError);
}

TEST_CASE("point evaluation on singleton buckets repeats one architecture") {
  Rng data_rng(10);
  const auto set = data::make_xor_patterns({60, 8, 0.3}, data_rng);
  const auto splits = data::split(set, {1, 1, 4}, data_rng);
  EvalSettings s;
  s.arch.deepest_channels = 2;
  s.train.batch_size = 16;
  s.repeats = 3;
  s.epochs = 1;
  FeaturePoint p{};
  for (const auto& [index, graphs] : grid().buckets())
    if (graphs.size() == 1) {
      p = grid().bucket_center(index);
      break;
    }
  Rng rng(11);
  const auto e = evaluate_point({p}, grid(), splits, s, rng);
  REQUIRE(e.values.size() == 3);
  CHECK(e.architectures[0] == e.architectures[1]);
  CHECK(e.architectures[1] == e.architectures[2]);
  for (double v : e.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  s.repeats = 1;
  const auto one = evaluate_point({p}, grid(), splits, s, rng);
  CHECK(one.median == one.values[0]);
}

TEST_CASE("neural beta source carries weights between outer epochs") {
  Rng data_rng(12);
  const auto set = data::make_xor_patterns({60, 8, 0.3}, data_rng);
  const auto splits = data::split(set, {1, 1, 4}, data_rng);
  NeuralSearchSettings s;
  s.arch.deepest_channels = 2;
  s.train.batch_size = 16;
  s.train.epochs = 1;
  DartsBetaSource src(splits, s);
  Rng rng(13);
  const std::vector<RowProposal> rows{propose_row({{0.3, 0.3, 0.3}}, 0.125, grid(), rng)};
  const auto b1 = src.evaluate(rows, rng);
  CHECK(src.carried_tensors() == 0);
  REQUIRE(b1.size() == 1);
  REQUIRE(b1[0].size() == 7);
  double sum = 0.0;
  for (double v : b1[0]) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  src.evaluate({propose_row({{0.6, 0.3, 0.3}}, 0.125, grid(), rng)}, rng);
  CHECK(src.carried_tensors() == src.last()->named_weights().size());
}

TEST_CASE("gaussian process") {
  GpConfig cfg;
  cfg.fit_length_scale = false;
  GaussianProcess gp(cfg);
  const FeaturePoint a{{0.2, 0.2, 0.2}}, b{{0.8, 0.8, 0.8}};

  SUBCASE("prior") {
    const auto p = gp.predict(a);
    CHECK(p.mean == 0.0);
    CHECK(p.stddev == 1.0);
    CHECK(gp.ucb(a) == doctest::Approx(2.5));
    CHECK(gp.kernel(a, a) == 1.0);
    CHECK(gp.kernel(a, b) == doctest::Approx(std::exp(-0.5 * 3 * 0.36 / 0.04)));
  }
  SUBCASE("posterior interpolates and shrinks the variance") {
    gp.add(a, 1.0);
    gp.add(b, 3.0);
    CHECK(gp.predict(a).mean == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(gp.predict(b).mean == doctest::Approx(3.0).epsilon(1e-2));
    CHECK(gp.predict(a).stddev < 0.1 * gp.predict({{0.5, 0.0, 1.0}}).stddev);
    // Far from data the mean returns to the observation mean.
    CHECK(gp.predict({{0.0, 1.0, 0.0}}).mean == doctest::Approx(2.0).epsilon(1e-3));
  }
  SUBCASE("duplicate observations stay factorizable") {
    for (int i = 0; i < 5; ++i) gp.add(a, 0.5);
    CHECK(std::isfinite(gp.predict(a).mean));
  }
  SUBCASE("non-finite observations are rejected") { CHECK_THROWS_AS(gp.add(a, NAN), NumericError); }
}

TEST_CASE("length-scale fitting prefers the generating scale") {
  GpConfig cfg;
  GaussianProcess gp(cfg);
  Rng rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    const FeaturePoint p{{u(rng), u(rng), u(rng)}};
    gp.add(p, std::sin(3.0 * p[0]) + p[1]);
  }
  CHECK(std::isfinite(gp.log_marginal_likelihood(0.5)));
  CHECK(gp.log_marginal_likelihood(gp.length_scale()) >= gp.log_marginal_likelihood(0.05));
  CHECK(gp.length_scale() > 0.2);
  GpConfig bad;
  bad.length_scale = 0.0;
  CHECK_THROWS_AS(GaussianProcess{bad}, ConfigError);
}

TEST_CASE("candidate lattice") {
  const auto l = candidate_lattice(9);
  CHECK(l.size() == 729);
  CHECK(l.front() == FeaturePoint{{0, 0, 0}});
  CHECK(l[1] == FeaturePoint{{0, 0, 0.125}});
  CHECK(l.back() == FeaturePoint{{1, 1, 1}});
  CHECK(candidate_lattice(1).size() == 1);
}

TEST_CASE("baselines") {
  const auto eval = oracle_evaluator(kOracle);
  GpConfig gp;

  SUBCASE("budget one") {
    Rng rng(15);
    CHECK(random_search(2, 1, eval, rng).records.size() == 1);
    const auto bo = bo_ucb(2, 1, gp, eval, rng);
    REQUIRE(bo.records.size() == 1);
    // Flat prior: the first lattice point wins the tie.
    for (const auto& p : bo.records[0].points) CHECK(p == FeaturePoint{{0, 0, 0}});
  }
  SUBCASE("bo is deterministic and finds the optimum") {
    std::size_t hits = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const auto h = bo_ucb(1, 50, gp, eval, rng);
      CHECK(h.records.size() == 50);
      hits += distance(h.records[h.best()].points[0], kOracle.optimum) <= 0.2;
    }
    CHECK(hits >= 4);
  }
  SUBCASE("random search is seed deterministic") {
    Rng a(16), b(16);
    const auto ha = random_search(2, 10, eval, a), hb = random_search(2, 10, eval, b);
    for (std::size_t i = 0; i < 10; ++i) CHECK(ha.records[i].points == hb.records[i].points);
    CHECK(ha.records[ha.best()].evaluation.median >= ha.records[0].evaluation.median);
  }
  SUBCASE("invalid budgets") {
    Rng rng(17);
    CHECK_THROWS_AS(random_search(1, 0, eval, rng), ConfigError);
    CHECK_THROWS_AS(bo_ucb(0, 5, gp, eval, rng), ConfigError);
  }
}
