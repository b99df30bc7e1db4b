#include <gtest/gtest.h>

#include <cmath>

#include "noisyor/generator.hpp"
#include "noisyor/io.hpp"

using namespace noisyor;

namespace {

Model random_n(std::size_t n, std::uint64_t seed) {
  GenConfig cfg;
  cfg.n_observed = n;
  cfg.seed = seed;
  return random_model(cfg);
}

void expect_same_model(const Model& a, const Model& b) {
  EXPECT_EQ(a.names(), b.names());
  EXPECT_EQ(a.order(), b.order());
  EXPECT_EQ(a.links(), b.links());
  // renormalization after permuting may move the last bit
  ASSERT_EQ(a.disturbance().size(), b.disturbance().size());
  for (std::size_t x = 0; x < a.disturbance().size(); ++x) {
    EXPECT_NEAR(a.disturbance()[x], b.disturbance()[x], 1e-15);
  }
}

}  // namespace

TEST(FormatDouble, ReadsBackExactly) {
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double v = uniform01(rng) * std::pow(10.0, uniform(rng, -10.0, 10.0));
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1000.0), "1000");
}

TEST(ModelJson, CanonicalLayoutFollowsCausalOrder) {
  // A is index 0 but B comes first causally, so B becomes the high bit.
  Model m({"A", "B"}, {1, 0}, {{{1, 0}, -0.4}}, {0.1, 0.2, 0.3, 0.4});
  const json j = model_to_json(m);
  EXPECT_EQ(j["n"], 2);
  EXPECT_EQ(j["order"], json::array({"B", "A"}));
  EXPECT_EQ(j["disturbance"], json::array({0.1, 0.3, 0.2, 0.4}));
  ASSERT_EQ(j["links"].size(), 1u);
  EXPECT_EQ(j["links"][0]["from"], "B");
  EXPECT_EQ(j["links"][0]["b"], -0.4);
}

TEST(ModelJson, RoundTripIsExact) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Model m = random_n(2 + seed % 6, seed);
    expect_same_model(model_from_json(parse_json(model_to_json(m).dump(2), "model")), m);
  }
}

TEST(ModelJson, OrderAloneDefinesIndicesWhenVariablesAbsent) {
  json j = parse_json(R"({"n": 2, "order": ["B", "A"],
      "links": [{"from": "B", "to": "A", "b": 0.7}],
      "disturbance": [0.1, 0.3, 0.2, 0.4]})", "model");
  Model m = model_from_json(j);
  EXPECT_EQ(m.names(), (std::vector<std::string>{"B", "A"}));
  EXPECT_EQ(m.order(), (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(m.link(0, 1), 0.7);
  EXPECT_EQ(m.disturbance(), (std::vector<double>{0.1, 0.3, 0.2, 0.4}));
}

TEST(ModelJson, MalformedInputIsRejected) {
  EXPECT_THROW(parse_json("{", "model"), Error);
  EXPECT_THROW(model_from_json(json{{"n", 2}}), Error);
  json j = model_to_json(random_n(3, 1));
  j["disturbance"] = json::array({1.0});
  EXPECT_THROW(model_from_json(j), Error);
  j = model_to_json(random_n(3, 1));
  j["links"].push_back({{"from", "X9"}, {"to", "X1"}, {"b", 0.5}});
  EXPECT_THROW(model_from_json(j), Error);
}

TEST(InteractiveJson, RoundTrip) {
  GenConfig cfg;
  cfg.n_observed = 5;
  cfg.max_parents = 3;
  cfg.seed = 4;
  auto im = make_interactive(random_model(cfg), 0.6, 9);
  auto back = interactive_from_json(parse_json(interactive_to_json(im).dump(), "model"));
  expect_same_model(back.base, im.base);
  EXPECT_EQ(back.y, im.y);
  ASSERT_EQ(back.interactions.size(), im.interactions.size());
  for (std::size_t k = 0; k < im.interactions.size(); ++k) {
    EXPECT_EQ(back.interactions[k].node, im.interactions[k].node);
    EXPECT_EQ(back.interactions[k].probs, im.interactions[k].probs);
  }
}

TEST(DatasetCsv, LayoutAndRoundTrip) {
  Dataset d;
  d.names = {"A", "B"};
  d.entries.push_back({"passive", {}, {3, 0, 1, 2.5}});
  d.entries.push_back({"do_B", ExperimentSpec::single(1, 0.25), {0, 4, 0, 0}});
  const std::string csv = dataset_to_csv(d);
  EXPECT_EQ(csv,
            "experiment_id,intervened_vars,A,B,count\n"
            "passive,,0,0,3\n"
            "passive,,1,0,1\n"
            "passive,,1,1,2.5\n"
            "do_B,B@0.25,0,1,4\n");
  Dataset back = dataset_from_csv(csv);
  EXPECT_EQ(back.names, d.names);
  ASSERT_EQ(back.entries.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back.entries[k].id, d.entries[k].id);
    EXPECT_EQ(back.entries[k].counts, d.entries[k].counts);
    EXPECT_EQ(back.entries[k].experiment.probabilities(), d.entries[k].experiment.probabilities());
  }
}

TEST(DatasetCsv, SampledRoundTrip) {
  Model m = random_n(5, 2);
  auto d = sample_dataset(m, m.names(), single_intervention_battery(5),
                          std::vector<std::size_t>(6, 300), 5);
  auto back = dataset_from_csv(dataset_to_csv(d));
  ASSERT_EQ(back.entries.size(), d.entries.size());
  for (std::size_t k = 0; k < d.entries.size(); ++k) {
    EXPECT_EQ(back.entries[k].counts, d.entries[k].counts);
  }
}

TEST(DatasetCsv, MalformedInputIsRejected) {
  EXPECT_THROW(dataset_from_csv(""), Error);
  EXPECT_THROW(dataset_from_csv("id,A,count\n"), Error);
  EXPECT_THROW(dataset_from_csv("experiment_id,intervened_vars,A,count\n"), Error);
  EXPECT_THROW(dataset_from_csv("experiment_id,intervened_vars,A,count\np,,2,1\n"), Error);
  EXPECT_THROW(dataset_from_csv("experiment_id,intervened_vars,A,count\np,,1,-1\n"), Error);
  EXPECT_THROW(dataset_from_csv("experiment_id,intervened_vars,A,count\np,Z@0.5,1,1\n"), Error);
  // one id with two different intervention sets
  EXPECT_THROW(dataset_from_csv("experiment_id,intervened_vars,A,B,count\n"
                                "e,A@0.5,1,0,1\ne,,0,0,1\n"),
               Error);
}

TEST(Manifest, RoundTripAndEmptyRejected) {
  const std::vector<std::string> names{"A", "B", "C"};
  std::vector<PlannedExperiment> plan{{"passive", {}, 100},
                                      {"pair", ExperimentSpec::on({0, 2}, 0.3), std::nullopt}};
  auto back = manifest_from_json(manifest_to_json(plan, names), names);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].samples, std::optional<std::size_t>(100));
  EXPECT_FALSE(back[1].samples);
  EXPECT_EQ(back[1].spec.probabilities(), plan[1].spec.probabilities());
  EXPECT_THROW(manifest_from_json(json{{"experiments", json::array()}}, names), Error);
  EXPECT_THROW(manifest_from_json(parse_json(R"({"experiments":[{"intervene":{"Q":0.5}}]})", "m"),
                                  names),
               Error);
}

TEST(StudyTables, CsvAndSummaryJson) {
  StudyResults res;
  res.config.kind = StudyKind::Robustness;
  res.conditions = {{5, 100, 0.5, 0.0, "n=5;samples=100;x=0.5;y=0"}};
  res.rows = {{0, 0, "em", "kl_single", 0.25, {}},
              {1, 0, "em", "kl_single", std::numeric_limits<double>::infinity(), {}},
              {2, 0, "em", "kl_single", std::numeric_limits<double>::quiet_NaN(), "boom, bad"}};
  res.summary = summarize(res.rows);
  const std::string csv = study_rows_to_csv(res);
  EXPECT_NE(csv.find("replicate,condition,n,samples,x,y,algorithm,metric,value,note\n"),
            std::string::npos);
  EXPECT_NE(csv.find(",inf,"), std::string::npos);
  EXPECT_NE(csv.find(",NA,boom  bad\n"), std::string::npos);
  const json j = study_summary_to_json(res);
  EXPECT_EQ(j["kl_direction"], "KL(true || estimated)");
  EXPECT_EQ(j["summary"][0]["infinite"], 1);
  EXPECT_EQ(j["summary"][0]["missing"], 1);
  EXPECT_TRUE(j["summary"][0]["sd"].is_null());
}

TEST(StudyConfigJson, KeysOverrideBase) {
  auto cfg = study_config_from_json(parse_json(R"({"replicates": 4, "seed": 9})", "cfg"),
                                    study_preset("robustness"));
  EXPECT_EQ(cfg.kind, StudyKind::Robustness);
  EXPECT_EQ(cfg.replicates, 4u);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_THROW(study_config_from_json(parse_json(R"({"kind": "speed"})", "cfg")), Error);
  auto again = study_config_from_json(study_config_to_json(cfg));
  EXPECT_EQ(study_config_to_json(again), study_config_to_json(cfg));
}
