#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "noisyor/causal_order.hpp"
#include "noisyor/dataset.hpp"
#include "noisyor/estimation.hpp"
#include "noisyor/learned_model.hpp"
#include "noisyor/model.hpp"

namespace noisyor {

// Dense 2^n x 2^n transfer matrices are refused beyond this size.
inline constexpr std::size_t kMaxDenseVariables = 14;

/// P(X | E || I) as a dense matrix, rows indexed by observed configuration
/// and columns by disturbance configuration. Entries follow the product form
/// directly: an intervened variable contributes its intervention probability,
/// any other variable j contributes [x_j = 1] when e_j = 1 and its noisy-OR
/// conditional otherwise.
inline Eigen::MatrixXd transfer_matrix(const Model& m, const ExperimentSpec& exp = {}) {
  const std::size_t n = m.size();
  require(n <= kMaxDenseVariables, "dense transfer matrix is capped at n = " +
                                       std::to_string(kMaxDenseVariables));
  exp.check(n);
  const std::size_t size = config_count(n);
  Eigen::MatrixXd out(size, size);
  for (Config x = 0; x < size; ++x) {
    std::vector<double> act(n);
    for (std::size_t j = 0; j < n; ++j) act[j] = link_activation(m.parents(j), n, x);
    for (Config e = 0; e < size; ++e) {
      double p = 1.0;
      for (std::size_t j = 0; j < n && p != 0.0; ++j) {
        const bool xj = bit_of(x, n, j);
        if (exp.intervenes(j)) {
          const double q = exp.probability(j);
          p *= xj ? q : 1.0 - q;
        } else if (bit_of(e, n, j)) {
          p *= xj ? 1.0 : 0.0;
        } else {
          p *= xj ? act[j] : 1.0 - act[j];
        }
      }
      out(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(e)) = p;
    }
  }
  return out;
}

/// Solves L y = b for lower-triangular L by forward substitution.
inline std::vector<double> forward_substitution(const Eigen::MatrixXd& lower,
                                                const std::vector<double>& b) {
  const auto size = lower.rows();
  require(lower.cols() == size && static_cast<std::size_t>(size) == b.size(),
          "forward substitution needs a square system");
  std::vector<double> y(b.size());
  for (Eigen::Index r = 0; r < size; ++r) {
    double s = b[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < r; ++c) s -= lower(r, c) * y[static_cast<std::size_t>(c)];
    require(lower(r, r) > 0.0, "transfer matrix has a non-positive diagonal entry",
            ErrorKind::Numerical);
    y[static_cast<std::size_t>(r)] = s / lower(r, r);
  }
  return y;
}

struct DisturbanceRecovery {
  std::vector<double> disturbance;
  DisturbanceDiagnostic diagnostic;
};

/// Projects a raw solution onto probabilities: negative entries are clipped
/// to zero and the rest renormalized. Negativity beyond `tolerance` is
/// flagged, not fatal.
inline DisturbanceRecovery clip_to_probabilities(std::vector<double> raw, double tolerance,
                                                 std::string method) {
  DisturbanceRecovery out;
  out.diagnostic.method = std::move(method);
  double sum = 0.0;
  for (double& v : raw) {
    out.diagnostic.min_entry = std::min(out.diagnostic.min_entry, v);
    if (v < 0.0) {
      out.diagnostic.clipped_mass -= v;
      v = 0.0;
    }
    sum += v;
  }
  require(sum > 0.0, "recovered disturbance has no positive mass", ErrorKind::Numerical);
  for (double& v : raw) v /= sum;
  out.diagnostic.flagged = out.diagnostic.min_entry < -tolerance;
  out.disturbance = std::move(raw);
  return out;
}

/// Solves p_X = P(X|E) p_E for p_E given identified links. P(X|E) vanishes
/// unless E is a subset of X (a disturbance forces its variable on), so the
/// system is lower triangular in lexicographic order with diagonal
/// prod_{j: x_j = 0} P(X_j = 0 | parents, E_j = 0). Forward substitution runs
/// over subsets only, computing the matrix entries on the fly.
inline DisturbanceRecovery recover_disturbance(const Model& structure,
                                               const Distribution& passive,
                                               double tolerance = 0.05) {
  const std::size_t n = structure.size();
  require(passive.n == n, "passive distribution has the wrong size");
  require(n <= kMaxDenseVariables, "disturbance recovery is capped at n = " +
                                       std::to_string(kMaxDenseVariables));
  const std::size_t size = config_count(n);
  std::vector<double> p_e(size, 0.0);
  std::vector<double> act(n);
  std::vector<Config> on_bits;
  for (Config x = 0; x < size; ++x) {
    double diag = 1.0;
    on_bits.clear();
    for (std::size_t j = 0; j < n; ++j) {
      act[j] = link_activation(structure.parents(j), n, x);
      if (bit_of(x, n, j)) {
        on_bits.push_back(var_mask(n, j));
      } else {
        diag *= 1.0 - act[j];
      }
    }
    if (!(diag > 0.0)) {
      throw Error(ErrorKind::InvalidArgument,
                  "transfer matrix diagonal vanishes; links must satisfy |b| < 1");
    }
    // Off-diagonal entries: diag * prod_{j in x \ E} act_j over proper subsets E.
    double s = passive.probs[x];
    for (Config e = (x - 1) & x; x != 0; e = (e - 1) & x) {
      if (p_e[e] != 0.0) {
        double f = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
          const Config m = var_mask(n, j);
          if ((x & m) && !(e & m)) f *= act[j];
        }
        s -= diag * f * p_e[e];
      }
      if (e == 0) break;
    }
    p_e[x] = s / diag;
  }
  return clip_to_probabilities(std::move(p_e), tolerance, "forward_substitution");
}

struct IdOptions {
  OrderOptions order;
  CpOptions cp;
  // |b| at or below this is reported as no edge.
  double zero_tolerance = 1e-9;
  // Negative disturbance entries beyond this are flagged (use ~1e-6 for exact input).
  double negativity_tolerance = 0.05;
};

struct LinkIdentification {
  LinkMap links;
  std::vector<PairDiagnostic> pairs;
};

/// Causal power of every ordered pair (i before j) conditioned on all
/// variables strictly between them in the order, taken from the qualifying
/// experiment with the largest stratum.
inline LinkIdentification identify_links(const Dataset& data, const std::vector<std::size_t>& order,
                                         const IdOptions& opts = {}) {
  data.check();
  const std::size_t n = data.size();
  require(order.size() == n, "order must cover every variable");
  LinkIdentification out;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const std::size_t i = order[a], j = order[b];
      const std::vector<std::size_t> between(order.begin() + static_cast<long>(a) + 1,
                                             order.begin() + static_cast<long>(b));
      PairDiagnostic diag{i, j, PairStatus::Unidentified, 0.0, {}, std::nullopt};
      std::optional<CpEstimate> best;
      bool any_qualifying = false, any_unreliable = false;
      for (const auto& e : data.entries) {
        if (!e.experiment.intervenes(i) || e.experiment.intervenes(j)) continue;
        any_qualifying = true;
        auto r = causal_power(e, n, i, j, between, SignMode::Auto, opts.cp);
        if (r.status == CpStatus::Unreliable) any_unreliable = true;
        if (r.ok() && (!best || r.estimate.weight() > best->weight())) best = r.estimate;
      }
      if (best) {
        diag.estimate = best->value;
        diag.provenance.push_back(*best);
        if (std::abs(best->value) > opts.zero_tolerance) {
          diag.status = PairStatus::Edge;
          out.links[{i, j}] = best->value;
        } else {
          diag.status = PairStatus::NoEdge;
        }
      } else if (any_qualifying) {
        diag.status = any_unreliable ? PairStatus::Unreliable : PairStatus::NoData;
      }
      out.pairs.push_back(std::move(diag));
    }
  }
  return out;
}

/// The four identification steps: causal order, adjacent and spanning links
/// by causal power, then P(E) from the passive distribution.
inline LearnedModel run_id(const Dataset& data, const IdOptions& opts = {}) {
  data.check();
  const DatasetEntry* passive = data.passive();
  require(passive != nullptr,
          "cannot recover the disturbance distribution without passive observational data",
          ErrorKind::InconsistentData);
  CausalOrder order = find_causal_order(data, opts.order);
  LinkIdentification ident = identify_links(data, order.order, opts);
  const std::size_t n = data.size();
  Model structure(data.names, order.order, ident.links,
                  std::vector<double>(config_count(n), 1.0 / static_cast<double>(config_count(n))));
  auto rec = recover_disturbance(structure, passive->frequencies(n), opts.negativity_tolerance);
  return LearnedModel{"id",
                      structure.with_disturbance(std::move(rec.disturbance)),
                      std::move(order),
                      std::move(ident.pairs),
                      rec.diagnostic,
                      {},
                      std::nullopt};
}

}  // namespace noisyor
