#pragma once

#include <string>
#include <vector>

#include "noisyor/exact.hpp"
#include "noisyor/model.hpp"

namespace noisyor {

/// Configuration counts N(x || I) gathered under one experiment. Counts may
/// be fractional so that exact distributions can stand in for samples.
struct DatasetEntry {
  std::string id;
  ExperimentSpec experiment;
  std::vector<double> counts;  // 2^n entries

  double total() const {
    double s = 0.0;
    for (double c : counts) s += c;
    return s;
  }

  Distribution frequencies(std::size_t n) const {
    const double t = total();
    require(t > 0.0, "experiment " + id + " has no samples", ErrorKind::InconsistentData);
    std::vector<double> p(counts.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = counts[i] / t;
    return Distribution(n, std::move(p));
  }
};

struct Dataset {
  std::vector<std::string> names;
  std::vector<DatasetEntry> entries;

  std::size_t size() const { return names.size(); }

  void check() const {
    require(!names.empty(), "dataset has no variables");
    require(names.size() <= kMaxVariables, "dataset has too many variables");
    require(!entries.empty(), "dataset has no experiments");
    for (const auto& e : entries) {
      e.experiment.check(size());
      require(e.counts.size() == config_count(size()),
              "experiment " + e.id + " has the wrong number of cells");
      for (double c : e.counts) {
        require(c >= 0.0 && std::isfinite(c), "negative count in experiment " + e.id,
                ErrorKind::InconsistentData);
      }
      require(e.total() > 0.0, "experiment " + e.id + " has no samples",
              ErrorKind::InconsistentData);
    }
  }

  const DatasetEntry* passive() const {
    const DatasetEntry* best = nullptr;
    for (const auto& e : entries) {
      if (e.experiment.is_passive() && (!best || e.total() > best->total())) best = &e;
    }
    return best;
  }
};

/// Passive regime plus one single-variable intervention per variable.
inline std::vector<ExperimentSpec> single_intervention_battery(std::size_t n,
                                                               double p = 0.5) {
  std::vector<ExperimentSpec> out{ExperimentSpec::passive()};
  for (std::size_t i = 0; i < n; ++i) out.push_back(ExperimentSpec::single(i, p));
  return out;
}

inline std::string experiment_label(const ExperimentSpec& exp,
                                    const std::vector<std::string>& names) {
  if (exp.is_passive()) return "passive";
  std::string s = "do";
  for (auto v : exp.intervened()) s += "_" + names.at(v);
  return s;
}

/// Expected counts weight * P(x || I) for each experiment: the
/// infinite-sample limit fed through the finite-sample code paths.
inline Dataset exact_dataset(const Model& model, const std::vector<ExperimentSpec>& exps,
                             double weight = 1e9) {
  Dataset d;
  d.names = model.names();
  for (const auto& exp : exps) {
    auto dist = exact_distribution(model, exp);
    for (auto& p : dist.probs) p *= weight;
    d.entries.push_back({experiment_label(exp, d.names), exp, std::move(dist.probs)});
  }
  return d;
}

}  // namespace noisyor
