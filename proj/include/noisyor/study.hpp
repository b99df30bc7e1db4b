#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "noisyor/dataset.hpp"
#include "noisyor/ec_learner.hpp"
#include "noisyor/em_learner.hpp"
#include "noisyor/evaluation.hpp"
#include "noisyor/generator.hpp"
#include "noisyor/id_learner.hpp"

namespace noisyor {

enum class StudyKind { Accuracy, Scalability, Robustness };

inline const char* to_string(StudyKind k) {
  switch (k) {
    case StudyKind::Accuracy: return "accuracy";
    case StudyKind::Scalability: return "scalability";
    case StudyKind::Robustness: return "robustness";
  }
  return "?";
}

inline StudyKind parse_study_kind(const std::string& s) {
  if (s == "accuracy") return StudyKind::Accuracy;
  if (s == "scalability") return StudyKind::Scalability;
  if (s == "robustness") return StudyKind::Robustness;
  throw Error(ErrorKind::InvalidArgument, "unknown study kind '" + s + "'");
}

/// Externally learned predictor (e.g. a Bayesian-network baseline) scored
/// alongside the built-in learners in the robustness study.
using ExternalPredictor = std::function<Distribution(const Dataset&, const ExperimentSpec&)>;

struct StudyConfig {
  StudyKind kind = StudyKind::Accuracy;
  std::vector<std::size_t> model_sizes{5};
  // Totals split evenly over passive + n single interventions, or per
  // experiment when `per_experiment` is set.
  std::vector<std::size_t> sample_sizes{900, 9000, 90000};
  bool per_experiment = false;
  std::size_t replicates = 30;
  std::vector<std::string> algorithms{"id", "ec", "em"};
  std::size_t max_parents = 2;
  double negative_fraction = 0.5;
  double intervention_probability = 0.5;
  // Robustness grid: confounding mix x and interaction bound y.
  std::vector<double> confounding_levels{1.0};
  std::vector<double> interaction_levels{0.0};
  bool map = false;  // EM variant used by every study
  std::size_t em_restarts = 3;
  std::uint64_t seed = 1;
  std::size_t parallel = 1;
  ExternalPredictor external;
  std::string external_name = "external";

  void check() const {
    require(!model_sizes.empty() && !sample_sizes.empty(), "study schedules must be nonempty");
    require(replicates >= 1, "study needs at least one replicate");
    require(!algorithms.empty() || external, "study needs at least one algorithm");
    for (const auto& a : algorithms) {
      require(a == "id" || a == "ec" || a == "em", "unknown algorithm '" + a + "'");
    }
    for (auto n : model_sizes) {
      require(n >= 2, "study models need at least two variables");
      const std::size_t total = kind == StudyKind::Scalability ? n + n / 2 : n;
      require(total <= kMaxVariables, "study model too large");
    }
    for (auto s : sample_sizes) require(s > 0, "sample sizes must be positive");
    require(intervention_probability > 0.0 && intervention_probability < 1.0,
            "intervention probability must lie in (0, 1)");
    require(!confounding_levels.empty() && !interaction_levels.empty(),
            "robustness grid must be nonempty");
    for (double x : confounding_levels) require(x >= 0.0 && x <= 1.0, "x must lie in [0, 1]");
    for (double y : interaction_levels) require(y >= 0.0 && y <= 1.0, "y must lie in [0, 1]");
    require(parallel >= 1, "parallelism must be at least 1");
  }
};

/// Desk-scale versions of the three analyses.
inline StudyConfig study_preset(const std::string& name) {
  StudyConfig c;
  if (name == "accuracy") {
    c.kind = StudyKind::Accuracy;
  } else if (name == "scalability") {
    c.kind = StudyKind::Scalability;
    c.model_sizes = {4, 5, 6, 7, 8, 9, 10};
    c.sample_sizes = {1000};
    c.per_experiment = true;
    c.algorithms = {"ec"};
  } else if (name == "robustness") {
    c.kind = StudyKind::Robustness;
    c.model_sizes = {5};
    c.sample_sizes = {10000};
    c.replicates = 20;
    c.algorithms = {"em"};
    c.confounding_levels = {0.0, 0.5, 1.0};
    c.interaction_levels = {0.0, 0.5, 1.0};
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown study preset '" + name + "'");
  }
  return c;
}

struct StudyCondition {
  std::size_t n = 0;
  std::size_t samples = 0;
  double x = 1.0;
  double y = 0.0;
  std::string label;
};

struct StudyRow {
  std::size_t replicate = 0;
  std::size_t condition = 0;
  std::string algorithm;
  std::string metric;
  double value = 0.0;  // NaN when missing
  std::string note;
};

struct SummaryRow {
  std::size_t condition = 0;
  std::string algorithm;
  std::string metric;
  std::size_t count = 0;  // finite values
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  std::size_t missing = 0;
  std::size_t infinite = 0;
};

struct StudyResults {
  StudyConfig config;
  std::vector<StudyCondition> conditions;
  std::vector<StudyRow> rows;
  std::vector<SummaryRow> summary;

  const SummaryRow* find(std::size_t condition, const std::string& algorithm,
                         const std::string& metric) const {
    for (const auto& s : summary) {
      if (s.condition == condition && s.algorithm == algorithm && s.metric == metric) return &s;
    }
    return nullptr;
  }
};

inline std::vector<StudyCondition> study_conditions(const StudyConfig& cfg) {
  std::vector<StudyCondition> out;
  auto fmt = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (s.back() == '.') s.pop_back();
    return s;
  };
  for (auto n : cfg.model_sizes) {
    for (auto s : cfg.sample_sizes) {
      const std::string base = "n=" + std::to_string(n) + ";samples=" + std::to_string(s);
      if (cfg.kind != StudyKind::Robustness) {
        out.push_back({n, s, 1.0, 0.0, base});
        continue;
      }
      for (double x : cfg.confounding_levels) {
        for (double y : cfg.interaction_levels) {
          out.push_back({n, s, x, y, base + ";x=" + fmt(x) + ";y=" + fmt(y)});
        }
      }
    }
  }
  return out;
}

/// Mean and sample standard deviation per (condition, algorithm, metric), in
/// order of first appearance.
inline std::vector<SummaryRow> summarize(const std::vector<StudyRow>& rows) {
  std::vector<SummaryRow> out;
  std::map<std::tuple<std::size_t, std::string, std::string>, std::size_t> index;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto key = std::make_tuple(r.condition, r.algorithm, r.metric);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({r.condition, r.algorithm, r.metric});
      values.emplace_back();
    }
    auto& s = out[it->second];
    if (std::isnan(r.value)) {
      ++s.missing;
    } else if (std::isinf(r.value)) {
      ++s.infinite;
    } else {
      values[it->second].push_back(r.value);
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& v = values[k];
    out[k].count = v.size();
    if (v.empty()) continue;
    double mean = 0.0;
    for (double d : v) mean += d;
    mean /= static_cast<double>(v.size());
    out[k].mean = mean;
    if (v.size() > 1) {
      double ss = 0.0;
      for (double d : v) ss += (d - mean) * (d - mean);
      out[k].sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

namespace detail {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline double or_missing(const std::optional<double>& v) { return v ? *v : kMissing; }

inline LearnedModel run_algorithm(const std::string& algo, const Dataset& data,
                                  const StudyConfig& cfg, std::uint64_t seed) {
  // Finite data can produce contradictory pairwise orderings; studies drop
  // the weaker one rather than abandoning the replicate.
  OrderOptions order;
  order.resolve_conflicts = true;
  if (algo == "id") {
    IdOptions o;
    o.order = order;
    return run_id(data, o);
  }
  EcOptions ec;
  ec.order = order;
  if (cfg.kind == StudyKind::Scalability) ec.solve_disturbance = false;
  if (algo == "ec") return run_ec(data, ec);
  EmOptions em;
  em.order = order;
  em.ec = ec;
  em.ec.solve_disturbance = true;
  em.map = cfg.map;
  em.restarts = cfg.em_restarts;
  em.seed = seed;
  return run_em(data, em);
}

inline std::vector<std::string> study_metrics(StudyKind k) {
  switch (k) {
    case StudyKind::Accuracy: return {"link_correlation", "disturbance_correlation"};
    case StudyKind::Scalability:
      return {"addition_rate", "deletion_rate", "reversals", "link_correlation",
              "additions", "true_non_edges", "deletions", "true_edges"};
    case StudyKind::Robustness: return {"kl_single", "kl_double"};
  }
  return {};
}

inline void record_failure(std::vector<StudyRow>& rows, std::size_t rep, std::size_t cond,
                           const std::string& algo, StudyKind kind, const std::string& what) {
  for (const auto& m : study_metrics(kind)) rows.push_back({rep, cond, algo, m, kMissing, what});
}

// Mean KL over a family of experiments; infinite if any member is.
template <class Truth, class Predict>
double family_kl(const Truth& truth, Predict&& predict, const std::vector<ExperimentSpec>& exps) {
  double sum = 0.0;
  for (const auto& e : exps) {
    const double kl = kl_divergence(exact_distribution(truth, e), predict(e));
    if (std::isinf(kl)) return kl;
    sum += kl;
  }
  return sum / static_cast<double>(exps.size());
}

inline std::vector<StudyRow> run_replicate(const StudyConfig& cfg, const StudyCondition& cond,
                                           std::size_t cond_index, std::size_t rep) {
  std::vector<StudyRow> rows;
  const std::size_t n = cond.n;
  // The model depends on (seed, n, replicate) only, so every sample size and
  // grid cell of a replicate sees the same base model.
  const std::uint64_t model_seed = derive_seed(derive_seed(cfg.seed, n), rep);
  const std::uint64_t data_seed = derive_seed(model_seed, 1 + cond_index);
  const auto battery = single_intervention_battery(n, cfg.intervention_probability);
  const auto counts = cfg.per_experiment ? std::vector<std::size_t>(battery.size(), cond.samples)
                                         : split_evenly(cond.samples, battery.size());

  GenConfig gen;
  gen.n_observed = n;
  gen.max_parents = cfg.max_parents;
  gen.negative_fraction = cfg.negative_fraction;
  gen.seed = model_seed;

  auto learn_each = [&](const Dataset& data, auto&& score) {
    for (const auto& algo : cfg.algorithms) {
      try {
        auto learned = run_algorithm(algo, data, cfg, derive_seed(data_seed, 3));
        score(algo, learned);
      } catch (const std::exception& e) {
        record_failure(rows, rep, cond_index, algo, cfg.kind, e.what());
      }
    }
  };

  switch (cfg.kind) {
    case StudyKind::Accuracy: {
      const Model truth = random_model(gen);
      const Dataset data = sample_dataset(truth, truth.names(), battery, counts, data_seed);
      learn_each(data, [&](const std::string& algo, const LearnedModel& lm) {
        rows.push_back({rep, cond_index, algo, "link_correlation",
                        or_missing(link_correlation(truth, lm.model)), {}});
        rows.push_back({rep, cond_index, algo, "disturbance_correlation",
                        or_missing(disturbance_correlation(truth, lm.model)), {}});
        if (lm.pruned) {
          rows.push_back({rep, cond_index, algo, "link_correlation_pruned",
                          or_missing(link_correlation(truth, *lm.pruned)), {}});
        }
      });
      break;
    }
    case StudyKind::Scalability: {
      gen.n_latent = n / 2;
      gen.confounding = 0.0;
      const LatentView view(random_model(gen), n / 2);
      const Dataset data = sample_dataset(view, view.names(), battery, counts, data_seed);
      const LinkMap truth = view.observed_links();
      learn_each(data, [&](const std::string& algo, const LearnedModel& lm) {
        const auto err = structural_errors(truth, lm.model.links(), n);
        rows.push_back({rep, cond_index, algo, "addition_rate", err.addition_rate, {}});
        rows.push_back({rep, cond_index, algo, "deletion_rate", err.deletion_rate, {}});
        rows.push_back({rep, cond_index, algo, "reversals", static_cast<double>(err.reversals), {}});
        rows.push_back({rep, cond_index, algo, "link_correlation",
                        or_missing(link_correlation(truth, lm.model.links())), {}});
        // raw counts, so rates can also be pooled over replicates
        rows.push_back({rep, cond_index, algo, "additions", static_cast<double>(err.additions), {}});
        rows.push_back({rep, cond_index, algo, "true_non_edges",
                        static_cast<double>(err.true_non_edges), {}});
        rows.push_back({rep, cond_index, algo, "deletions", static_cast<double>(err.deletions), {}});
        rows.push_back({rep, cond_index, algo, "true_edges", static_cast<double>(err.true_edges), {}});
      });
      break;
    }
    case StudyKind::Robustness: {
      const Model base = mix_confounding(random_model(gen), cond.x);
      const InteractiveModel truth = make_interactive(base, cond.y, derive_seed(model_seed, 17));
      const Dataset data = sample_dataset(truth, base.names(), battery, counts, data_seed);
      const auto singles = intervention_family(n, 1, cfg.intervention_probability);
      const auto doubles = intervention_family(n, 2, cfg.intervention_probability, 8, 28,
                                               derive_seed(model_seed, 29));
      learn_each(data, [&](const std::string& algo, const LearnedModel& lm) {
        auto predict = [&](const ExperimentSpec& e) { return exact_distribution(lm.model, e); };
        rows.push_back({rep, cond_index, algo, "kl_single", family_kl(truth, predict, singles), {}});
        rows.push_back({rep, cond_index, algo, "kl_double", family_kl(truth, predict, doubles), {}});
      });
      if (cfg.external) {
        try {
          auto predict = [&](const ExperimentSpec& e) { return cfg.external(data, e); };
          rows.push_back({rep, cond_index, cfg.external_name, "kl_single",
                          family_kl(truth, predict, singles), {}});
          rows.push_back({rep, cond_index, cfg.external_name, "kl_double",
                          family_kl(truth, predict, doubles), {}});
        } catch (const std::exception& e) {
          record_failure(rows, rep, cond_index, cfg.external_name, cfg.kind, e.what());
        }
      }
      break;
    }
  }
  return rows;
}

}  // namespace detail

/// generate -> sample -> learn -> score for every (condition, replicate).
/// Replicates may run on `cfg.parallel` threads; rows are gathered in task
/// order, so the output does not depend on the thread count.
inline StudyResults run_study(const StudyConfig& cfg) {
  cfg.check();
  StudyResults res;
  res.config = cfg;
  res.conditions = study_conditions(cfg);
  const std::size_t tasks = res.conditions.size() * cfg.replicates;
  std::vector<std::vector<StudyRow>> out(tasks);
  auto run_task = [&](std::size_t t) {
    const std::size_t c = t / cfg.replicates, r = t % cfg.replicates;
    try {
      out[t] = detail::run_replicate(cfg, res.conditions[c], c, r);
    } catch (const std::exception& e) {
      out[t].clear();
      for (const auto& algo : cfg.algorithms) {
        detail::record_failure(out[t], r, c, algo, cfg.kind, e.what());
      }
    }
  };
  const std::size_t workers = std::min(cfg.parallel, tasks);
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks;) run_task(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& v : out) {
    for (auto& r : v) res.rows.push_back(std::move(r));
  }
  res.summary = summarize(res.rows);
  return res;
}

}  // namespace noisyor
