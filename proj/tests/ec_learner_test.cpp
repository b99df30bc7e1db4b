#include <gtest/gtest.h>

#include <cmath>

#include "noisyor/ec_learner.hpp"
#include "noisyor/generator.hpp"
#include "noisyor/id_learner.hpp"
#include "noisyor/simplex_ls.hpp"

using namespace noisyor;

namespace {

Model random_n(std::size_t n, std::uint64_t seed, std::size_t max_parents = 2) {
  GenConfig cfg;
  cfg.n_observed = n;
  cfg.max_parents = max_parents;
  cfg.seed = seed;
  return random_model(cfg);
}

using Sets = std::vector<std::vector<std::size_t>>;

}  // namespace

TEST(SimplexProjection, KnownCases) {
  auto p = project_to_simplex({0.5, 0.5});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  auto q = project_to_simplex({2.0, 0.0, 0.0});
  EXPECT_EQ(q, (std::vector<double>{1.0, 0.0, 0.0}));
  auto r = project_to_simplex({0.0, 0.0});
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  auto s = project_to_simplex({1.0, 0.6, -3.0});
  EXPECT_NEAR(s[0], 0.7, 1e-15);
  EXPECT_NEAR(s[1], 0.3, 1e-15);
  EXPECT_EQ(s[2], 0.0);
}

TEST(SimplexProjection, OptimalityProperty) {
  // The projection is the closest simplex point: no random simplex point is
  // closer.
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(5);
    for (auto& e : v) e = uniform(rng, -1.0, 1.5);
    auto p = project_to_simplex(v);
    double sum = 0.0, best = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_GE(p[i], 0.0);
      sum += p[i];
      best += (p[i] - v[i]) * (p[i] - v[i]);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (int k = 0; k < 20; ++k) {
      auto q = dirichlet(rng, 5, 1.0);
      double d = 0.0;
      for (std::size_t i = 0; i < 5; ++i) d += (q[i] - v[i]) * (q[i] - v[i]);
      EXPECT_GE(d, best - 1e-12);
    }
  }
}

TEST(SimplexLeastSquares, InteriorSolutionOfSquareSystem) {
  // A = diag(1, 2, 3), b = A x* with x* on the simplex.
  const std::vector<double> xs{0.2, 0.3, 0.5}, d{1.0, 2.0, 3.0};
  auto fwd = [&](const std::vector<double>& x) {
    std::vector<double> y(3);
    for (int i = 0; i < 3; ++i) y[i] = d[i] * x[i];
    return y;
  };
  std::vector<double> b = fwd(xs);
  auto res = simplex_least_squares(fwd, fwd, b, {1.0, 0.0, 0.0});
  ASSERT_TRUE(res.converged);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(res.x[i], xs[i], 1e-9);
  EXPECT_LT(res.kkt, 1e-9);
}

TEST(SimplexLeastSquares, ActiveConstraint) {
  // Identity operator, target outside the simplex: solution is its projection.
  auto id = [](const std::vector<double>& x) { return x; };
  std::vector<double> b{1.0, 0.6, -3.0};
  auto res = simplex_least_squares(id, id, b, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(res.x[0], 0.7, 1e-9);
  EXPECT_NEAR(res.x[1], 0.3, 1e-9);
  EXPECT_NEAR(res.x[2], 0.0, 1e-12);
}

TEST(BlockingSets, NoPathsGiveEmptySet) {
  Digraph g(4);
  EXPECT_EQ(minimal_blocking_sets(g, 0, 3, {1, 2}), (Sets{{}}));
  // a direct edge is not an indirect path
  g.add(0, 3);
  EXPECT_EQ(minimal_blocking_sets(g, 0, 3, {1, 2}), (Sets{{}}));
}

TEST(BlockingSets, SinglePath) {
  Digraph g(3);
  g.add(0, 1);
  g.add(1, 2);
  EXPECT_EQ(minimal_blocking_sets(g, 0, 2, {1}), (Sets{{1}}));
}

TEST(BlockingSets, TwoDisjointPathsNeedBoth) {
  Digraph g(4);
  g.add(0, 1);
  g.add(1, 3);
  g.add(0, 2);
  g.add(2, 3);
  EXPECT_EQ(minimal_blocking_sets(g, 0, 3, {1, 2}), (Sets{{1, 2}}));
}

TEST(BlockingSets, SeveralMinimumCuts) {
  // 0 -> 1 -> 2 -> 4 and a dead end 0 -> 3: cuts {1} and {2}; 3 is off-path.
  Digraph g(5);
  g.add(0, 1);
  g.add(1, 2);
  g.add(2, 4);
  g.add(0, 3);
  EXPECT_EQ(minimal_blocking_sets(g, 0, 4, {1, 2, 3}), (Sets{{1}, {2}}));
  EXPECT_EQ(minimal_blocking_sets(g, 0, 4, {1, 2, 3}, 1), (Sets{{1}}));
}

TEST(BlockingSets, MatchesExhaustiveSearch) {
  // Every returned set cuts all paths, has the minimum size, and every
  // minimum cut within the cap is listed.
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 6;
    Digraph g(n);
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        if (bernoulli(rng, 0.5)) g.add(u, v);
      }
    }
    const std::vector<std::size_t> window{1, 2, 3, 4};
    auto sets = minimal_blocking_sets(g, 0, 5, window);
    auto blocks = [&](std::uint32_t mask) {
      // any path 0 -> ... -> 5 of length >= 2 avoiding mask (DAG, forward edges only)
      std::vector<char> reach(n, 0);
      reach[0] = 1;
      bool hit = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (!reach[u]) continue;
        for (auto v : g.out[u]) {
          if (v == 5) {
            if (u != 0) hit = true;
          } else if (!(mask >> v & 1u)) {
            reach[v] = 1;
          }
        }
      }
      return !hit;
    };
    std::size_t best = 99;
    std::vector<std::uint32_t> minimum;
    for (std::uint32_t mask = 0; mask < 64; ++mask) {
      if (mask & 0b100001u) continue;
      if (!blocks(mask)) continue;
      const auto sz = static_cast<std::size_t>(__builtin_popcount(mask));
      if (sz < best) {
        best = sz;
        minimum.clear();
      }
      if (sz == best) minimum.push_back(mask);
    }
    // the returned sets may omit off-path vertices; compare as masks
    std::vector<std::uint32_t> got;
    for (const auto& s : sets) {
      std::uint32_t m = 0;
      for (auto v : s) m |= 1u << v;
      EXPECT_TRUE(blocks(m));
      EXPECT_EQ(s.size(), best);
      got.push_back(m);
    }
    for (auto m : minimum) {
      EXPECT_NE(std::find(got.begin(), got.end(), m), got.end()) << "trial " << t;
    }
  }
}

TEST(BlockingSets, InterventionCutsIncomingEdges) {
  LinkMap links{{{0, 1}, 0.5}, {{1, 2}, 0.5}};
  const auto g = experiment_graph(3, links, ExperimentSpec::on({0, 1}));
  EXPECT_EQ(minimal_blocking_sets(g, 0, 2, {1}), (Sets{{}}));
  const auto h = experiment_graph(3, links, ExperimentSpec::single(0));
  EXPECT_EQ(minimal_blocking_sets(h, 0, 2, {1}), (Sets{{1}}));
}

TEST(RunEc, SparseChainSkipsSpanningEdge) {
  Model m(default_names(3), {0, 1, 2}, {{{0, 1}, 0.8}, {{1, 2}, 0.5}},
          {0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05});
  auto learned = run_ec(exact_dataset(m, single_intervention_battery(3)));
  EXPECT_NEAR(learned.model.link(0, 1), 0.8, 1e-9);
  EXPECT_NEAR(learned.model.link(1, 2), 0.5, 1e-9);
  EXPECT_EQ(learned.model.link(0, 2), 0.0);
  for (const auto& p : learned.pairs) {
    if (p.cause == 0 && p.effect == 2) {
      EXPECT_EQ(p.status, PairStatus::NoEdge);
      ASSERT_FALSE(p.provenance.empty());
      EXPECT_EQ(p.provenance[0].conditioning, (std::vector<std::size_t>{1}));
      EXPECT_NEAR(p.estimate, 0.0, 1e-9);
    }
  }
}

// Minimal blocking sets are exact when conditioning on a cut vertex cannot
// open another route: single-parent graphs with independent disturbances.
TEST(RunEc, ExactDataMatchesIdOnUnconfoundedTrees) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Model m = mix_confounding(random_n(6, seed, 1), 0.0);
    auto data = exact_dataset(m, single_intervention_battery(6));
    IdOptions id_opts;
    id_opts.negativity_tolerance = 1e-6;
    auto id = run_id(data, id_opts);
    auto ec = run_ec(data);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        if (i == j) continue;
        EXPECT_NEAR(ec.model.link(i, j), id.model.link(i, j), 1e-9) << "seed " << seed;
        EXPECT_NEAR(ec.model.link(i, j), m.link(i, j), 1e-9) << "seed " << seed;
      }
    }
    double sum = 0.0, err = 0.0;
    for (std::size_t x = 0; x < m.disturbance().size(); ++x) {
      EXPECT_GE(ec.model.disturbance()[x], 0.0);
      sum += ec.model.disturbance()[x];
      err = std::max(err, std::abs(ec.model.disturbance()[x] - m.disturbance()[x]));
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_LT(err, 1e-6) << "seed " << seed;
  }
}

TEST(RunEc, PreliminaryEstimatesAgreeOnUnconfoundedTrees) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Model m = mix_confounding(random_n(6, seed, 1), 0.0);
    auto ec = run_ec(exact_dataset(m, single_intervention_battery(6)));
    for (const auto& p : ec.pairs) {
      for (const auto& est : p.provenance) {
        EXPECT_NEAR(est.value, m.link(p.cause, p.effect), 1e-9) << "seed " << seed;
      }
    }
  }
}

TEST(RunEc, CutVertexWithSharedParentBiasesEstimate) {
  // X1 -> X2 -> X3 -> X5 and X4 -> {X2, X5}; X1 has no link to X5. The
  // minimum cuts {X2} and {X3} both condition on the collider X2 or below
  // it, so X1 and X4 become dependent and X4 reaches X5 directly. Conditioning on every
  // intermediate variable does not have this problem.
  Model m(default_names(5), {0, 3, 1, 2, 4},
          {{{0, 1}, 0.8}, {{1, 2}, 0.7}, {{2, 4}, 0.8}, {{3, 1}, 0.6}, {{3, 4}, 0.7}},
          std::vector<double>(32, 1.0 / 32));
  m = m.with_disturbance(mix_disturbance(std::vector<double>(32, 1.0 / 32), 5, 0.0));
  auto data = exact_dataset(m, single_intervention_battery(5));
  auto id = run_id(data);
  EXPECT_NEAR(id.model.link(0, 4), 0.0, 1e-9);
  EcOptions opts;
  opts.solve_disturbance = false;
  auto ec = run_ec(data, opts);
  for (const auto& p : ec.pairs) {
    if (p.cause != 0 || p.effect != 4) continue;
    bool biased = false;
    for (const auto& e : p.provenance) {
      if (std::abs(e.value) > 1e-3) biased = true;
    }
    EXPECT_TRUE(biased);
  }
}

TEST(RunEc, PooledEstimateWithinPreliminaryRange) {
  Model m = random_n(6, 5);
  auto data = sample_dataset(m, m.names(), single_intervention_battery(6),
                             std::vector<std::size_t>(7, 3000), 21);
  auto ec = run_ec(data);
  for (const auto& p : ec.pairs) {
    if (p.provenance.empty()) continue;
    double lo = 1.0, hi = -1.0;
    for (const auto& e : p.provenance) {
      lo = std::min(lo, e.value);
      hi = std::max(hi, e.value);
    }
    EXPECT_GE(p.estimate, lo - 1e-12);
    EXPECT_LE(p.estimate, hi + 1e-12);
  }
  double sum = 0.0;
  for (double v : ec.model.disturbance()) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(RunEc, EmptyGraphFalsePositiveRateNearAlpha) {
  // Independent variables: any accepted edge is a false positive.
  std::size_t added = 0, tested = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    GenConfig cfg;
    cfg.n_observed = 6;
    cfg.max_parents = 0;
    cfg.seed = seed;
    Model m = random_model(cfg);
    auto data = sample_dataset(m, m.names(), single_intervention_battery(6),
                               std::vector<std::size_t>(7, 1000), seed);
    EcOptions opts;
    opts.solve_disturbance = false;
    opts.order.resolve_conflicts = true;
    auto ec = run_ec(data, opts);
    added += ec.model.links().size();
    tested += 15;
  }
  const double rate = static_cast<double>(added) / static_cast<double>(tested);
  EXPECT_LT(rate, 0.05);
}
