#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "noisyor/causal_order.hpp"
#include "noisyor/dataset.hpp"
#include "noisyor/estimation.hpp"
#include "noisyor/exact.hpp"
#include "noisyor/id_learner.hpp"
#include "noisyor/learned_model.hpp"
#include "noisyor/simplex_ls.hpp"

namespace noisyor {

/// Directed graph over n variables as adjacency lists.
struct Digraph {
  std::vector<std::vector<std::size_t>> out;

  explicit Digraph(std::size_t n = 0) : out(n) {}
  std::size_t size() const { return out.size(); }
  void add(std::size_t from, std::size_t to) { out[from].push_back(to); }
};

/// The accepted edges as seen in an experiment: edges into intervened
/// variables are cut.
inline Digraph experiment_graph(std::size_t n, const LinkMap& links, const ExperimentSpec& exp) {
  Digraph g(n);
  for (const auto& [key, b] : links) {
    if (!exp.intervenes(key.second)) g.add(key.first, key.second);
  }
  return g;
}

namespace detail {

inline std::vector<char> reachable(const Digraph& g, std::size_t from,
                                   const std::vector<char>& removed, bool reverse) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::size_t>> rev;
  if (reverse) {
    rev.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
      for (auto v : g.out[u]) rev[v].push_back(u);
    }
  }
  const auto& adj = reverse ? rev : g.out;
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{from};
  seen[from] = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u]) {
      if (seen[v] || removed[v]) continue;
      seen[v] = 1;
      stack.push_back(v);
    }
  }
  return seen;
}

}  // namespace detail

/// All minimum-cardinality sets of intermediate vertices that cut every
/// directed path from i to j, drawn from `universe`. Only vertices lying on
/// some such path are considered. A direct edge i -> j is never cut.
/// At most `cap` sets are returned, earliest first in the order of `universe`.
inline std::vector<std::vector<std::size_t>> minimal_blocking_sets(
    const Digraph& g, std::size_t i, std::size_t j, const std::vector<std::size_t>& universe,
    std::size_t cap = 32) {
  const std::size_t n = g.size();
  require(i < n && j < n && i != j, "blocking sets need two distinct variables");
  std::vector<char> none(n, 0);
  const auto from_i = detail::reachable(g, i, none, false);
  const auto to_j = detail::reachable(g, j, none, true);
  std::vector<std::size_t> cand;
  for (auto v : universe) {
    if (v != i && v != j && from_i[v] && to_j[v]) cand.push_back(v);
  }

  // Does some path i -> ... -> j of length >= 2 survive removing `cut`?
  auto connected = [&](const std::vector<char>& cut) {
    const auto seen = detail::reachable(g, i, cut, false);
    for (std::size_t u = 0; u < n; ++u) {
      if (u == i || !seen[u]) continue;
      for (auto v : g.out[u]) {
        if (v == j) return true;
      }
    }
    return false;
  };

  std::vector<char> cut(n, 0);
  if (!connected(cut)) return {{}};
  require(!cand.empty(), "paths between the variables leave the allowed window",
          ErrorKind::Numerical);
  std::vector<std::vector<std::size_t>> found;
  for (std::size_t k = 1; k <= cand.size() && found.empty(); ++k) {
    // combinations of k candidates in lexicographic order
    std::vector<std::size_t> pick(k);
    for (std::size_t t = 0; t < k; ++t) pick[t] = t;
    for (;;) {
      std::fill(cut.begin(), cut.end(), 0);
      for (auto t : pick) cut[cand[t]] = 1;
      if (!connected(cut)) {
        std::vector<std::size_t> set;
        for (auto t : pick) set.push_back(cand[t]);
        found.push_back(std::move(set));
        if (found.size() >= cap) return found;
      }
      std::size_t t = k;
      while (t > 0 && pick[t - 1] == cand.size() - k + t - 1) --t;
      if (t == 0) break;
      ++pick[t - 1];
      for (std::size_t u = t; u < k; ++u) pick[u] = pick[u - 1] + 1;
    }
  }
  require(!found.empty(), "paths between the variables cannot be blocked", ErrorKind::Numerical);
  return found;
}

struct EcOptions {
  OrderOptions order;
  CpOptions cp;
  double alpha = 0.01;        // edge test significance level
  double min_expected = 5.0;  // smallest expected cell count for a valid test
  std::size_t max_blocking_sets = 32;
  // When false, P(E) comes from the passive data alone (triangular solve).
  bool solve_disturbance = true;
  SimplexLsOptions least_squares;
  double negativity_tolerance = 0.05;
};

struct EcLinks {
  LinkMap links;
  std::vector<PairDiagnostic> pairs;
};

/// Edge decisions pair by pair: causes from the end of the order backwards,
/// effects forwards, so that every path inside the window (i, j) is already
/// known when (i, j) is examined.
inline EcLinks ec_links(const Dataset& data, const std::vector<std::size_t>& order,
                        const EcOptions& opts = {}) {
  data.check();
  const std::size_t n = data.size();
  require(order.size() == n, "order must cover every variable");
  EcLinks out;
  if (n < 2) return out;
  for (std::size_t a = n - 1; a-- > 0;) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const std::size_t i = order[a], j = order[b];
      const std::vector<std::size_t> window(order.begin() + static_cast<long>(a) + 1,
                                            order.begin() + static_cast<long>(b));
      PairDiagnostic diag{i, j, PairStatus::Unidentified, 0.0, {}, std::nullopt};
      struct Candidate {
        const DatasetEntry* entry;
        std::vector<std::size_t> set;
        CpEstimate raw;
      };
      std::vector<Candidate> usable;
      bool any_qualifying = false, any_unreliable = false;
      for (const auto& e : data.entries) {
        if (!e.experiment.intervenes(i) || e.experiment.intervenes(j)) continue;
        any_qualifying = true;
        const Digraph g = experiment_graph(n, out.links, e.experiment);
        for (auto& set : minimal_blocking_sets(g, i, j, window, opts.max_blocking_sets)) {
          auto r = causal_power(e, n, i, j, set, SignMode::Auto, opts.cp);
          if (r.status == CpStatus::Unreliable) any_unreliable = true;
          if (r.ok()) usable.push_back({&e, std::move(set), r.estimate});
        }
      }
      if (usable.empty()) {
        if (any_qualifying) diag.status = any_unreliable ? PairStatus::Unreliable : PairStatus::NoData;
        out.pairs.push_back(std::move(diag));
        continue;
      }

      // One sign for the pair, read off the best-supported contrast; every
      // estimate is then taken under that sign so they can be averaged.
      const Candidate* best = &usable.front();
      for (const auto& c : usable) {
        if (c.raw.weight() > best->raw.weight()) best = &c;
      }
      const SignMode sign = best->raw.contrast < 0.0 ? SignMode::Negative : SignMode::Positive;
      double num = 0.0, den = 0.0;
      for (const auto& c : usable) {
        auto r = causal_power(*c.entry, n, i, j, c.set, sign, opts.cp);
        num += r.estimate.weight() * r.estimate.value;
        den += r.estimate.weight();
        diag.provenance.push_back(r.estimate);
      }
      diag.estimate = num / den;

      Context zero;
      for (auto v : best->set) zero.push_back({v, false});
      diag.test = chi_square_independence(*best->entry, n, i, j, zero);
      if (diag.test->significant(opts.alpha, opts.min_expected) && diag.estimate != 0.0) {
        diag.status = PairStatus::Edge;
        out.links[{i, j}] = diag.estimate;
      } else {
        diag.status = PairStatus::NoEdge;
      }
      out.pairs.push_back(std::move(diag));
    }
  }
  return out;
}

/// Least-squares P(E) over every experiment at once: minimizes
/// sum_k w_k || P(X | E || I_k) p_E - f_k ||^2 on the simplex, with w_k the
/// experiment's share of the samples.
inline DisturbanceRecovery least_squares_disturbance(const Model& structure, const Dataset& data,
                                                     std::vector<double> init,
                                                     const SimplexLsOptions& opts = {}) {
  data.check();
  const std::size_t n = structure.size();
  require(data.size() == n, "dataset and model disagree on the variables");
  const std::size_t size = config_count(n);
  const std::size_t k = data.entries.size();
  double total = 0.0;
  for (const auto& e : data.entries) total += e.total();
  std::vector<double> scale(k), target(k * size);
  for (std::size_t e = 0; e < k; ++e) {
    const auto& entry = data.entries[e];
    scale[e] = std::sqrt(entry.total() / total);
    const double t = entry.total();
    for (std::size_t x = 0; x < size; ++x) target[e * size + x] = scale[e] * entry.counts[x] / t;
  }
  auto forward = [&](const std::vector<double>& p) {
    std::vector<double> out(k * size);
    for (std::size_t e = 0; e < k; ++e) {
      const auto px = apply_transfer(structure, data.entries[e].experiment, p);
      for (std::size_t x = 0; x < size; ++x) out[e * size + x] = scale[e] * px[x];
    }
    return out;
  };
  auto adjoint = [&](const std::vector<double>& r) {
    std::vector<double> out(size, 0.0);
    for (std::size_t e = 0; e < k; ++e) {
      std::vector<double> block(r.begin() + static_cast<long>(e * size),
                                r.begin() + static_cast<long>((e + 1) * size));
      for (double& v : block) v *= scale[e];
      const auto g = apply_transfer_transpose(structure, data.entries[e].experiment, block);
      for (std::size_t x = 0; x < size; ++x) out[x] += g[x];
    }
    return out;
  };
  if (init.empty()) init.assign(size, 1.0 / static_cast<double>(size));
  auto res = simplex_least_squares(forward, adjoint, target, std::move(init), opts);
  DisturbanceRecovery out;
  out.disturbance = std::move(res.x);
  out.diagnostic.method = "simplex_least_squares";
  out.diagnostic.iterations = res.iterations;
  out.diagnostic.kkt = res.kkt;
  out.diagnostic.converged = res.converged;
  out.diagnostic.flagged = !res.converged;
  return out;
}

/// Causal order, then edges with minimal conditioning, then P(E) by
/// simplex-constrained least squares over all experiments.
inline LearnedModel run_ec(const Dataset& data, const EcOptions& opts = {}) {
  data.check();
  const std::size_t n = data.size();
  CausalOrder order = find_causal_order(data, opts.order);
  EcLinks ec = ec_links(data, order.order, opts);
  const std::size_t size = config_count(n);
  Model structure(data.names, order.order, ec.links,
                  std::vector<double>(size, 1.0 / static_cast<double>(size)));

  DisturbanceRecovery rec;
  const DatasetEntry* passive = data.passive();
  if (passive) {
    rec = recover_disturbance(structure, passive->frequencies(n), opts.negativity_tolerance);
  } else {
    rec.disturbance.assign(size, 1.0 / static_cast<double>(size));
    rec.diagnostic.method = "uniform";
  }
  if (opts.solve_disturbance) {
    auto ls = least_squares_disturbance(structure, data, rec.disturbance, opts.least_squares);
    ls.diagnostic.min_entry = rec.diagnostic.min_entry;
    ls.diagnostic.clipped_mass = rec.diagnostic.clipped_mass;
    rec = std::move(ls);
  }
  return LearnedModel{"ec",
                      structure.with_disturbance(std::move(rec.disturbance)),
                      std::move(order),
                      std::move(ec.pairs),
                      rec.diagnostic,
                      {},
                      std::nullopt};
}

}  // namespace noisyor
