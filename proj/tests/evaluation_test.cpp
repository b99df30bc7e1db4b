#include <gtest/gtest.h>

#include <cmath>

#include "noisyor/evaluation.hpp"
#include "noisyor/generator.hpp"
#include "noisyor/study.hpp"

using namespace noisyor;

namespace {

Model random_n(std::size_t n, std::uint64_t seed) {
  GenConfig cfg;
  cfg.n_observed = n;
  cfg.seed = seed;
  return random_model(cfg);
}

bool same_value(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

}  // namespace

TEST(LinkCorrelation, TruthAgainstItselfIsOne) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Model m = random_n(6, seed);
    if (m.links().size() < 2) continue;
    auto r = link_correlation(m, m);
    if (!r) continue;  // all links equal
    EXPECT_NEAR(*r, 1.0, 1e-12);
  }
}

TEST(LinkCorrelation, FlippedSignsOnSymmetricPairGiveMinusOne) {
  // Truth (0.5, -0.5), estimate (-0.5, 0.5): both centered at 0, perfectly
  // anti-aligned.
  LinkMap truth{{{0, 1}, 0.5}, {{1, 2}, -0.5}};
  LinkMap est{{{0, 1}, -0.5}, {{1, 2}, 0.5}};
  auto r = link_correlation(truth, est);
  ASSERT_TRUE(r);
  EXPECT_NEAR(*r, -1.0, 1e-12);
}

TEST(LinkCorrelation, UnionOfEdgesCountsAbsentAsZero) {
  LinkMap truth{{{0, 1}, 0.8}, {{1, 2}, 0.4}};
  LinkMap est{{{0, 1}, 0.8}, {{0, 2}, 0.4}};
  // vectors over (0,1), (0,2), (1,2): (0.8, 0, 0.4) vs (0.8, 0.4, 0)
  // centered: (0.4, -0.4, 0) and (0.4, 0, -0.4) -> 0.16 / 0.32 = 0.5
  auto r = link_correlation(truth, est);
  ASSERT_TRUE(r);
  EXPECT_NEAR(*r, 0.5, 1e-12);
}

TEST(LinkCorrelation, ConstantEstimateIsMissing) {
  LinkMap truth{{{0, 1}, 0.8}, {{1, 2}, 0.4}};
  LinkMap est{{{0, 1}, 0.3}, {{1, 2}, 0.3}};
  EXPECT_FALSE(link_correlation(truth, est));
  EXPECT_FALSE(link_correlation(LinkMap{}, LinkMap{}));
}

TEST(StructuralErrors, TruthHasNoErrors) {
  Model m = random_n(6, 3);
  auto e = structural_errors(m, m);
  EXPECT_EQ(e.addition_rate, 0.0);
  EXPECT_EQ(e.deletion_rate, 0.0);
  EXPECT_EQ(e.reversals, 0u);
  EXPECT_EQ(e.true_edges + e.true_non_edges, 15u);
}

TEST(StructuralErrors, EmptyEstimateDeletesEverything) {
  Model m = random_n(6, 4);
  ASSERT_FALSE(m.links().empty());
  auto e = structural_errors(m.links(), {}, 6);
  EXPECT_EQ(e.deletion_rate, 1.0);
  EXPECT_EQ(e.addition_rate, 0.0);
}

TEST(StructuralErrors, OneSpuriousEdge) {
  LinkMap truth{{{0, 1}, 0.5}, {{1, 2}, 0.5}};
  LinkMap est = truth;
  est[{0, 3}] = 0.2;
  auto e = structural_errors(truth, est, 4);
  EXPECT_EQ(e.true_non_edges, 4u);
  EXPECT_DOUBLE_EQ(e.addition_rate, 0.25);
  EXPECT_EQ(e.deletion_rate, 0.0);
}

TEST(StructuralErrors, ReversalIsCountedSeparately) {
  LinkMap truth{{{0, 1}, 0.5}, {{1, 2}, 0.5}};
  LinkMap est{{{1, 0}, 0.5}, {{1, 2}, 0.5}};
  auto e = structural_errors(truth, est, 3);
  EXPECT_EQ(e.reversals, 1u);
  EXPECT_EQ(e.additions, 0u);
  EXPECT_EQ(e.deletions, 0u);
}

TEST(StructuralErrors, RatesStayInUnitInterval) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto e = structural_errors(random_n(6, seed), random_n(6, seed + 100));
    for (double r : {e.addition_rate, e.deletion_rate}) {
      if (std::isnan(r)) continue;
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
  }
}

TEST(StructuralErrors, EmptyDenominatorsAreUndefined) {
  auto none = structural_errors(LinkMap{}, LinkMap{{{0, 1}, 0.3}}, 2);
  EXPECT_TRUE(std::isnan(none.deletion_rate));
  EXPECT_DOUBLE_EQ(none.addition_rate, 1.0);
  auto full = structural_errors(LinkMap{{{0, 1}, 0.3}}, LinkMap{}, 2);
  EXPECT_TRUE(std::isnan(full.addition_rate));
  EXPECT_DOUBLE_EQ(full.deletion_rate, 1.0);
}

TEST(KlDivergence, OneVariableByHand) {
  Distribution p(1, {0.5, 0.5}), q(1, {0.75, 0.25});
  const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  EXPECT_NEAR(kl_divergence(p, q), expected, 1e-15);
}

TEST(KlDivergence, DisjointSupportIsInfinite) {
  Distribution p(1, {1.0, 0.0}), q(1, {0.0, 1.0});
  EXPECT_TRUE(std::isinf(kl_divergence(p, q)));
  // zero mass where the truth also has none is harmless
  EXPECT_EQ(kl_divergence(p, p), 0.0);
}

TEST(KlDivergence, NonNegativeAndZeroOnlyAtEquality) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Model a = random_n(4, seed), b = random_n(4, seed + 50);
    for (const auto& exp : intervention_family(4, 1)) {
      EXPECT_GE(interventional_kl(a, b, exp), 0.0);
      EXPECT_LT(interventional_kl(a, a, exp), 1e-12);
    }
  }
}

TEST(InterventionFamily, ExhaustiveThenSampled) {
  EXPECT_EQ(intervention_family(5, 1).size(), 5u);
  EXPECT_EQ(intervention_family(5, 2).size(), 10u);
  auto sampled = intervention_family(12, 2, 0.5, 8, 28, 9);
  EXPECT_EQ(sampled.size(), 28u);
  auto again = intervention_family(12, 2, 0.5, 8, 28, 9);
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    EXPECT_EQ(sampled[k].intervened(), again[k].intervened());
    EXPECT_EQ(sampled[k].intervened().size(), 2u);
  }
}

TEST(AverageKl, InfiniteMembersAreCountedApart) {
  Model truth(default_names(1), {0}, {}, {0.5, 0.5});
  Model est(default_names(1), {0}, {}, {1.0, 0.0});
  auto s = average_kl(truth, est, {ExperimentSpec::passive(), ExperimentSpec::single(0)});
  EXPECT_EQ(s.infinite, 1u);
  EXPECT_EQ(s.finite, 1u);
  EXPECT_NEAR(s.mean, 0.0, 1e-15);
}

TEST(Summarize, MeanSdAndSeparateCounts) {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<StudyRow> rows{{0, 0, "em", "kl", 1.0, {}},
                             {1, 0, "em", "kl", 3.0, {}},
                             {2, 0, "em", "kl", inf, {}},
                             {3, 0, "em", "kl", nan, "failed"}};
  auto s = summarize(rows);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].count, 2u);
  EXPECT_DOUBLE_EQ(s[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(s[0].sd, std::sqrt(2.0));
  EXPECT_EQ(s[0].infinite, 1u);
  EXPECT_EQ(s[0].missing, 1u);
}

TEST(Study, PresetsAndInvalidNames) {
  EXPECT_EQ(study_preset("accuracy").kind, StudyKind::Accuracy);
  EXPECT_EQ(study_preset("scalability").model_sizes.size(), 7u);
  EXPECT_EQ(study_preset("robustness").confounding_levels.size(), 3u);
  EXPECT_THROW(study_preset("speed"), Error);
  StudyConfig bad;
  bad.replicates = 0;
  EXPECT_THROW(run_study(bad), Error);
}

TEST(Study, BitReproducibleAcrossThreadCounts) {
  StudyConfig cfg;
  cfg.model_sizes = {4};
  cfg.sample_sizes = {500, 2000};
  cfg.replicates = 3;
  cfg.em_restarts = 1;
  cfg.seed = 11;
  auto serial = run_study(cfg);
  cfg.parallel = 4;
  auto threaded = run_study(cfg);
  ASSERT_EQ(serial.rows.size(), 2u * 3u * (2u + 2u + 3u));  // EM adds a pruned correlation
  ASSERT_EQ(serial.rows.size(), threaded.rows.size());
  for (std::size_t k = 0; k < serial.rows.size(); ++k) {
    EXPECT_EQ(serial.rows[k].algorithm, threaded.rows[k].algorithm);
    EXPECT_EQ(serial.rows[k].metric, threaded.rows[k].metric);
    EXPECT_TRUE(same_value(serial.rows[k].value, threaded.rows[k].value));
  }
  cfg.seed = 12;
  auto other = run_study(cfg);
  bool differs = false;
  for (std::size_t k = 0; k < other.rows.size(); ++k) {
    differs = differs || !same_value(other.rows[k].value, serial.rows[k].value);
  }
  EXPECT_TRUE(differs);
}

TEST(Study, LearnerFailuresAreRecorded) {
  StudyConfig cfg;
  cfg.model_sizes = {15};
  cfg.sample_sizes = {100};
  cfg.replicates = 2;
  cfg.algorithms = {"em"};
  auto res = run_study(cfg);
  ASSERT_EQ(res.rows.size(), 4u);
  for (const auto& r : res.rows) {
    EXPECT_TRUE(std::isnan(r.value));
    EXPECT_FALSE(r.note.empty());
  }
  EXPECT_EQ(res.summary[0].missing, 2u);
}

TEST(Study, RobustnessGridScoresExternalPredictor) {
  StudyConfig cfg = study_preset("robustness");
  cfg.model_sizes = {3};
  cfg.sample_sizes = {3000};
  cfg.replicates = 2;
  cfg.confounding_levels = {1.0};
  cfg.interaction_levels = {0.0, 1.0};
  cfg.em_restarts = 1;
  // A predictor that always answers uniform.
  cfg.external = [](const Dataset& d, const ExperimentSpec&) {
    return Distribution(d.size(), std::vector<double>(config_count(d.size()), 0.125));
  };
  auto res = run_study(cfg);
  ASSERT_EQ(res.conditions.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    for (const char* algo : {"em", "external"}) {
      for (const char* metric : {"kl_single", "kl_double"}) {
        const auto* s = res.find(c, algo, metric);
        ASSERT_NE(s, nullptr) << algo << " " << metric;
        EXPECT_EQ(s->count + s->infinite, 2u);
      }
    }
  }
}

TEST(Study, ScalabilityReportsRates) {
  StudyConfig cfg = study_preset("scalability");
  cfg.model_sizes = {4, 5};
  cfg.replicates = 2;
  auto res = run_study(cfg);
  for (const auto& r : res.rows) {
    if ((r.metric == "addition_rate" || r.metric == "deletion_rate") && !std::isnan(r.value)) {
      EXPECT_GE(r.value, 0.0);
      EXPECT_LE(r.value, 1.0);
    }
  }
  EXPECT_NE(res.find(1, "ec", "deletion_rate"), nullptr);
}
