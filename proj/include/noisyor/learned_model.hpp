#pragma once

#include <optional>
#include <string>
#include <vector>

#include "noisyor/causal_order.hpp"
#include "noisyor/estimation.hpp"
#include "noisyor/model.hpp"

namespace noisyor {

enum class PairStatus {
  Edge,          // link added to the model
  NoEdge,        // estimated, judged absent
  Unidentified,  // no experiment intervenes on the cause while observing the effect
  NoData,        // every candidate stratum was empty
  Unreliable,    // every candidate estimate had a vanishing denominator
};

inline const char* to_string(PairStatus s) {
  switch (s) {
    case PairStatus::Edge: return "edge";
    case PairStatus::NoEdge: return "no_edge";
    case PairStatus::Unidentified: return "unidentified";
    case PairStatus::NoData: return "no_data";
    case PairStatus::Unreliable: return "unreliable";
  }
  return "?";
}

struct PairDiagnostic {
  std::size_t cause = 0;
  std::size_t effect = 0;
  PairStatus status = PairStatus::Unidentified;
  double estimate = 0.0;
  // Preliminary estimates behind `estimate`, with their strata.
  std::vector<CpEstimate> provenance;
  std::optional<ChiSquareResult> test;
};

struct DisturbanceDiagnostic {
  std::string method;
  double min_entry = 0.0;     // most negative raw entry before clipping
  double clipped_mass = 0.0;  // total negative mass removed
  bool flagged = false;       // negativity beyond tolerance or solver trouble
  std::size_t iterations = 0;
  double kkt = 0.0;
  bool converged = true;
};

struct EmTraceRow {
  std::size_t iteration = 0;
  double log_likelihood = 0.0;
  double max_delta = 0.0;
};

/// Estimated model plus whatever the learner can say about how it got there.
struct LearnedModel {
  std::string algorithm;
  Model model;
  CausalOrder order;
  std::vector<PairDiagnostic> pairs;
  DisturbanceDiagnostic disturbance;
  std::vector<EmTraceRow> trace;
  // EM only: the complete-DAG estimate with small links dropped.
  std::optional<Model> pruned;
};

/// Drops links with |b| below `threshold`.
inline Model prune_links(const Model& m, double threshold) {
  LinkMap kept;
  for (const auto& [key, b] : m.links()) {
    if (std::abs(b) >= threshold) kept[key] = b;
  }
  return Model(m.names(), m.order(), std::move(kept), m.disturbance());
}

}  // namespace noisyor
