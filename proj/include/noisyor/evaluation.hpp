#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "noisyor/exact.hpp"
#include "noisyor/model.hpp"
#include "noisyor/rng.hpp"

namespace noisyor {

/// Pearson correlation; nullopt when either side has zero variance or fewer
/// than two points.
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "correlation needs equal-length vectors");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Correlation of signed link values over the union of true and estimated
/// edges, absent links counting as 0.
inline std::optional<double> link_correlation(const LinkMap& truth, const LinkMap& est) {
  std::set<std::pair<std::size_t, std::size_t>> keys;
  for (const auto& kv : truth) keys.insert(kv.first);
  for (const auto& kv : est) keys.insert(kv.first);
  std::vector<double> a, b;
  for (const auto& k : keys) {
    auto t = truth.find(k);
    auto e = est.find(k);
    a.push_back(t == truth.end() ? 0.0 : t->second);
    b.push_back(e == est.end() ? 0.0 : e->second);
  }
  return pearson(a, b);
}

inline std::optional<double> link_correlation(const Model& truth, const Model& est) {
  return link_correlation(truth.links(), est.links());
}

/// Correlation between two disturbance vectors cell by cell.
inline std::optional<double> disturbance_correlation(const Model& truth, const Model& est) {
  return pearson(truth.disturbance(), est.disturbance());
}

// Rates are NaN when their denominator is zero.
struct StructuralErrors {
  double addition_rate = std::numeric_limits<double>::quiet_NaN();  // spurious / true non-adjacent pairs
  double deletion_rate = std::numeric_limits<double>::quiet_NaN();  // missed / true edges
  std::size_t additions = 0;
  std::size_t deletions = 0;
  std::size_t reversals = 0;  // adjacency found with the wrong orientation
  std::size_t true_edges = 0;
  std::size_t true_non_edges = 0;
};

/// Compares adjacencies as unordered pairs; a reversed edge is neither an
/// addition nor a deletion but is counted separately.
inline StructuralErrors structural_errors(const LinkMap& truth, const LinkMap& est,
                                          std::size_t n) {
  StructuralErrors out;
  auto adjacent = [](const LinkMap& m, std::size_t a, std::size_t b) {
    return m.count({a, b}) > 0 || m.count({b, a}) > 0;
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const bool t = adjacent(truth, a, b), e = adjacent(est, a, b);
      if (t) {
        ++out.true_edges;
        if (!e) {
          ++out.deletions;
        } else if (truth.count({a, b}) != est.count({a, b})) {
          ++out.reversals;
        }
      } else {
        ++out.true_non_edges;
        if (e) ++out.additions;
      }
    }
  }
  if (out.true_non_edges) {
    out.addition_rate = static_cast<double>(out.additions) / static_cast<double>(out.true_non_edges);
  }
  if (out.true_edges) {
    out.deletion_rate = static_cast<double>(out.deletions) / static_cast<double>(out.true_edges);
  }
  return out;
}

inline StructuralErrors structural_errors(const Model& truth, const Model& est) {
  require(truth.size() == est.size(), "models disagree on the variables");
  return structural_errors(truth.links(), est.links(), truth.size());
}

/// KL(truth || est) in nats; +infinity when est puts zero mass where truth
/// does not.
inline double kl_divergence(const Distribution& truth, const Distribution& est) {
  require(truth.probs.size() == est.probs.size(), "distributions disagree on size");
  double kl = 0.0;
  for (std::size_t x = 0; x < truth.probs.size(); ++x) {
    const double p = truth.probs[x];
    if (p <= 0.0) continue;
    const double q = est.probs[x];
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p * std::log(p / q);
  }
  return std::max(0.0, kl);
}

template <class Truth>
double interventional_kl(const Truth& truth, const Model& est, const ExperimentSpec& exp) {
  return kl_divergence(exact_distribution(truth, exp), exact_distribution(est, exp));
}

/// Every experiment randomizing exactly k of n variables (k = 1 or 2) with
/// probability p; above `exhaustive_limit` variables, `sample_size` of them
/// drawn with the given seed.
inline std::vector<ExperimentSpec> intervention_family(std::size_t n, std::size_t k,
                                                       double p = 0.5,
                                                       std::size_t exhaustive_limit = 8,
                                                       std::size_t sample_size = 28,
                                                       std::uint64_t seed = 1) {
  require(k == 1 || k == 2, "only single and double interventions are enumerated");
  require(k <= n, "more intervened variables than variables");
  std::vector<ExperimentSpec> all;
  if (k == 1) {
    for (std::size_t i = 0; i < n; ++i) all.push_back(ExperimentSpec::single(i, p));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) all.push_back(ExperimentSpec::on({i, j}, p));
    }
  }
  if (n <= exhaustive_limit || all.size() <= sample_size) return all;
  Rng rng(seed);
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::swap(all[i], all[i + uniform_index(rng, all.size() - i)]);
  }
  all.resize(sample_size);
  return all;
}

struct KlSummary {
  double mean = 0.0;  // over finite values
  std::size_t finite = 0;
  std::size_t infinite = 0;
};

template <class Truth>
KlSummary average_kl(const Truth& truth, const Model& est, const std::vector<ExperimentSpec>& exps) {
  KlSummary s;
  for (const auto& e : exps) {
    const double kl = interventional_kl(truth, est, e);
    if (std::isinf(kl)) {
      ++s.infinite;
    } else {
      s.mean += kl;
      ++s.finite;
    }
  }
  if (s.finite) s.mean /= static_cast<double>(s.finite);
  return s;
}

}  // namespace noisyor
