#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "noisyor/dataset.hpp"
#include "noisyor/estimation.hpp"

namespace noisyor {

struct OrderOptions {
  double alpha = 0.01;
  double min_expected = 5.0;
  // When false, an ancestor relation that admits no total order raises an
  // InconsistentData error. When true, significant pairs are inserted
  // strongest first and any pair that would close a cycle is dropped and
  // reported in `conflicts`.
  bool resolve_conflicts = false;
};

/// Marginal dependence test of X_effect on X_cause in one experiment that
/// intervenes on the cause and observes the effect.
struct PairTest {
  std::size_t cause = 0;
  std::size_t effect = 0;
  std::string experiment;
  ChiSquareResult result;
  bool significant = false;
};

struct CausalOrder {
  // ancestor[i][j] != 0: X_i is an ancestor of X_j (transitively closed)
  std::vector<std::vector<char>> ancestor;
  std::vector<std::size_t> order;
  // Ordered pairs with no experiment intervening on the first and observing
  // the second.
  std::vector<std::pair<std::size_t, std::size_t>> unknown;
  // Significant pairs dropped because they contradicted stronger evidence.
  std::vector<std::pair<std::size_t, std::size_t>> conflicts;
  std::vector<PairTest> tests;

  std::size_t position(std::size_t v) const {
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), v) - order.begin());
  }
};

/// Linear extension of a (transitively closed) ancestor relation; among the
/// available variables the lowest index goes first.
inline std::vector<std::size_t> linear_extension(const std::vector<std::vector<char>>& ancestor) {
  const std::size_t n = ancestor.size();
  std::vector<std::size_t> order;
  std::vector<char> placed(n, 0);
  while (order.size() < n) {
    std::size_t pick = n;
    for (std::size_t v = 0; v < n && pick == n; ++v) {
      if (placed[v]) continue;
      bool ready = true;
      for (std::size_t u = 0; u < n; ++u) {
        if (!placed[u] && u != v && ancestor[u][v]) ready = false;
      }
      if (ready) pick = v;
    }
    require(pick < n, "ancestor relation is cyclic", ErrorKind::InconsistentData);
    placed[pick] = 1;
    order.push_back(pick);
  }
  return order;
}

/// Tests every ordered pair (i, j) in every experiment with i intervened and
/// j observed; a significant dependence marks i as an ancestor of j. The
/// relation is closed transitively and resolved into a total order.
inline CausalOrder find_causal_order(const Dataset& data, const OrderOptions& opts = {}) {
  data.check();
  const std::size_t n = data.size();
  CausalOrder out;
  out.ancestor.assign(n, std::vector<char>(n, 0));

  struct Evidence {
    std::size_t i, j;
    double p;
  };
  std::vector<Evidence> evidence;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool qualifying = false;
      double best_p = 1.0;
      bool any_significant = false;
      for (const auto& e : data.entries) {
        if (!e.experiment.intervenes(i) || e.experiment.intervenes(j)) continue;
        qualifying = true;
        PairTest t{i, j, e.id, chi_square_independence(e, n, i, j, {}), false};
        t.significant = t.result.significant(opts.alpha, opts.min_expected);
        if (t.significant) {
          any_significant = true;
          best_p = std::min(best_p, t.result.p_value);
        }
        out.tests.push_back(std::move(t));
      }
      if (!qualifying) out.unknown.emplace_back(i, j);
      if (any_significant) evidence.push_back({i, j, best_p});
    }
  }

  std::stable_sort(evidence.begin(), evidence.end(),
                   [](const Evidence& a, const Evidence& b) { return a.p < b.p; });
  auto& anc = out.ancestor;
  for (const auto& ev : evidence) {
    if (anc[ev.i][ev.j]) continue;
    if (anc[ev.j][ev.i]) {
      if (!opts.resolve_conflicts) {
        throw Error(ErrorKind::InconsistentData,
                    "ancestor relation has a cycle through " + data.names[ev.i] + " and " +
                        data.names[ev.j]);
      }
      out.conflicts.emplace_back(ev.i, ev.j);
      continue;
    }
    // everything up to and including i now precedes everything from j on
    for (std::size_t a = 0; a < n; ++a) {
      if (a != ev.i && !anc[a][ev.i]) continue;
      for (std::size_t b = 0; b < n; ++b) {
        if (b == ev.j || anc[ev.j][b]) anc[a][b] = 1;
      }
    }
  }
  out.order = linear_extension(anc);
  return out;
}

}  // namespace noisyor
