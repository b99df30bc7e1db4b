#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "noisyor/causal_order.hpp"
#include "noisyor/dataset.hpp"
#include "noisyor/ec_learner.hpp"
#include "noisyor/learned_model.hpp"
#include "noisyor/rng.hpp"

namespace noisyor {

inline constexpr std::size_t kMaxEmVariables = 14;

/// P*(E | x || I) over all 2^n disturbance configurations. Intervened
/// variables contribute no likelihood factor, so their E bits keep the prior.
inline std::vector<double> disturbance_posterior(const Model& m, const ExperimentSpec& exp,
                                                 Config x) {
  const std::size_t n = m.size();
  const std::size_t size = config_count(n);
  require(x < size, "configuration out of range");
  std::vector<double> post(size, 0.0);
  double z = 0.0;
  for (Config e = 0; e < size; ++e) {
    double w = m.disturbance()[e];
    for (std::size_t j = 0; j < n && w != 0.0; ++j) {
      if (exp.intervenes(j)) continue;
      const double p1 = node_conditional(m, j, x, bit_of(e, n, j));
      w *= bit_of(x, n, j) ? p1 : 1.0 - p1;
    }
    post[e] = w;
    z += w;
  }
  require(z > 0.0, "observed configuration has probability zero", ErrorKind::InconsistentData);
  for (double& p : post) p /= z;
  return post;
}

/// Expected complete-data log-likelihood of one node's links as a function
/// of unconstrained parameters theta, with b_p = sign_p * sigmoid(theta_p).
/// Rows are parent configurations with their posterior-weighted counts of
/// X_j = 0 and X_j = 1 (given E_j = 0).
class NodeObjective {
 public:
  struct Row {
    std::uint32_t active;  // bit s set: parent slot s is switched on (after sign)
    double off;            // weight with X_j = 0
    double on;             // weight with X_j = 1
  };

  NodeObjective(std::vector<double> signs, std::vector<Row> rows)
      : signs_(std::move(signs)), rows_(std::move(rows)) {}

  std::size_t dim() const { return signs_.size(); }
  const std::vector<double>& signs() const { return signs_; }

  static double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

  double value(const Eigen::VectorXd& theta) const {
    const auto m = magnitudes(theta);
    double f = 0.0;
    for (const auto& r : rows_) {
      const double q = survive(m, r.active);
      if (r.off > 0.0) f += r.off * std::log(q);
      if (r.on > 0.0) f += r.on * std::log1p(-q);
    }
    return f;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    const auto m = magnitudes(theta);
    for (const auto& r : rows_) {
      const double q = survive(m, r.active);
      // d/dm_s of on*log(1-q) + off*log(q) = [on*q/(1-q) - off] / (1 - m_s)
      const double c = (r.on > 0.0 ? r.on * q / (1.0 - q) : 0.0) - r.off;
      for (std::size_t s = 0; s < dim(); ++s) {
        if (!(r.active >> s & 1u)) continue;
        g(static_cast<Eigen::Index>(s)) += c * m[s];
      }
    }
    return g;
  }

  /// Expected information in theta (positive semi-definite).
  Eigen::MatrixXd fisher(const Eigen::VectorXd& theta) const {
    const auto k = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k, k);
    const auto m = magnitudes(theta);
    Eigen::VectorXd d(k);
    for (const auto& r : rows_) {
      const double total = r.on + r.off;
      if (!(total > 0.0)) continue;
      const double q = survive(m, r.active);
      if (!(q > 0.0) || !(q < 1.0)) continue;
      // d act / d theta_s = q / (1 - m_s) * m_s (1 - m_s) = q m_s
      for (std::size_t s = 0; s < dim(); ++s) {
        d(static_cast<Eigen::Index>(s)) = (r.active >> s & 1u) ? q * m[s] : 0.0;
      }
      f.noalias() += total / (q * (1.0 - q)) * d * d.transpose();
    }
    return f;
  }

 private:
  std::vector<double> magnitudes(const Eigen::VectorXd& theta) const {
    std::vector<double> m(dim());
    for (std::size_t s = 0; s < dim(); ++s) m[s] = sigmoid(theta(static_cast<Eigen::Index>(s)));
    return m;
  }
  static double survive(const std::vector<double>& m, std::uint32_t active) {
    double q = 1.0;
    for (std::size_t s = 0; s < m.size(); ++s) {
      if (active >> s & 1u) q *= 1.0 - m[s];
    }
    return q;
  }

  std::vector<double> signs_;
  std::vector<Row> rows_;
};

struct NodeStepResult {
  Eigen::VectorXd theta;
  bool improved_or_stationary = true;
};

inline constexpr double kThetaBound = 30.0;

/// Fisher scoring with Armijo backtracking; stops once an accepted step
/// gains less than `tolerance` (in units of the objective per unit weight).
inline NodeStepResult maximize_node(const NodeObjective& obj, Eigen::VectorXd theta,
                                    double weight, double tolerance = 1e-8,
                                    std::size_t max_steps = 100) {
  NodeStepResult out;
  if (obj.dim() == 0) {
    out.theta = theta;
    return out;
  }
  const double scale = std::max(1.0, weight);
  double f = obj.value(theta);
  for (std::size_t it = 0; it < max_steps; ++it) {
    const Eigen::VectorXd g = obj.gradient(theta);
    if (g.cwiseAbs().maxCoeff() < 1e-12 * scale) break;
    Eigen::MatrixXd h = obj.fisher(theta);
    const double ridge = 1e-10 * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
    h.diagonal().array() += ridge;
    Eigen::VectorXd dir = h.llt().solve(g);
    if (!dir.allFinite() || g.dot(dir) <= 0.0) dir = g / (g.norm() * scale);
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd next;
    double fn = f;
    for (int bt = 0; bt < 60; ++bt) {
      next = (theta + t * dir).cwiseMax(-kThetaBound).cwiseMin(kThetaBound);
      fn = obj.value(next);
      if (std::isfinite(fn) && fn >= f + 1e-4 * g.dot(next - theta)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || !(fn >= f)) {
      out.improved_or_stationary = g.cwiseAbs().maxCoeff() < 1e-6 * scale;
      break;
    }
    const double gain = fn - f;
    theta = next;
    f = fn;
    if (gain < tolerance * scale) break;
  }
  out.theta = theta;
  return out;
}

struct EmOptions {
  OrderOptions order;
  // Signs and support of the links to estimate; empty means the complete
  // DAG over the learned causal order.
  std::optional<LinkMap> structure;
  std::optional<std::vector<std::size_t>> fixed_order;
  std::optional<Model> init;  // single start from these parameters
  bool map = false;
  // Dirichlet pseudo-count per P(E) cell under MAP; default 0.01 N / 2^n.
  std::optional<double> pseudo_count;
  std::size_t max_iterations = 500;
  double tolerance = 1e-6;  // on the change in log-likelihood per sample
  double inner_tolerance = 1e-8;
  std::size_t restarts = 3;
  std::uint64_t seed = 1;
  double prune_threshold = 0.05;
  EcOptions ec;  // for the first start
};

struct EmFit {
  Model model;
  std::vector<EmTraceRow> trace;
  double objective = -INFINITY;  // final log-likelihood (log-posterior under MAP)
  bool converged = false;
  bool inner_flagged = false;
};

namespace detail {

struct EmStats {
  std::vector<double> e_counts;                 // expected counts over E
  std::vector<std::vector<double>> off, on;     // per node, indexed by x & parent mask
  double log_likelihood = 0.0;
};

struct EmData {
  struct Cell {
    Config x;
    double count;
  };
  struct Block {
    const ExperimentSpec* exp;
    Config free_mask;
    Config intervened_mask;
    std::vector<Cell> cells;
  };
  std::vector<Block> blocks;
  double total = 0.0;
};

inline EmData compact(const Dataset& data) {
  const std::size_t n = data.size();
  EmData d;
  for (const auto& e : data.entries) {
    EmData::Block b{&e.experiment, 0, 0, {}};
    for (std::size_t j = 0; j < n; ++j) {
      (e.experiment.intervenes(j) ? b.intervened_mask : b.free_mask) |= var_mask(n, j);
    }
    for (Config x = 0; x < e.counts.size(); ++x) {
      if (e.counts[x] > 0.0) {
        b.cells.push_back({x, e.counts[x]});
        d.total += e.counts[x];
      }
    }
    d.blocks.push_back(std::move(b));
  }
  return d;
}

inline EmStats e_step(const Model& m, const EmData& data) {
  const std::size_t n = m.size();
  const std::size_t size = config_count(n);
  EmStats st;
  st.e_counts.assign(size, 0.0);
  st.off.assign(n, std::vector<double>(size, 0.0));
  st.on.assign(n, std::vector<double>(size, 0.0));
  std::vector<Config> parent_mask(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& p : m.parents(j)) parent_mask[j] |= var_mask(n, p.from);
  }
  std::vector<double> act(n), e_off(n);
  std::vector<double> w;
  for (const auto& block : data.blocks) {
    for (const auto& cell : block.cells) {
      const Config x = cell.x;
      double diag = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        const Config mj = var_mask(n, j);
        if (!(block.free_mask & mj)) continue;
        act[j] = link_activation(m.parents(j), n, x);
        if (!(x & mj)) diag *= 1.0 - act[j];
      }
      const Config on_free = x & block.free_mask;
      const Config support = on_free | block.intervened_mask;
      // enumerate E within the support
      double z = 0.0;
      std::fill(e_off.begin(), e_off.end(), 0.0);
      w.clear();
      for (Config e = support;; e = (e - 1) & support) {
        double v = m.disturbance()[e];
        if (v != 0.0) {
          for (std::size_t j = 0; j < n; ++j) {
            const Config mj = var_mask(n, j);
            if ((on_free & mj) && !(e & mj)) v *= act[j];
          }
        }
        w.push_back(v);
        z += v;
        if (e == 0) break;
      }
      require(z > 0.0 && diag > 0.0, "observed configuration has probability zero",
              ErrorKind::InconsistentData);
      st.log_likelihood += cell.count * (std::log(diag) + std::log(z));
      std::size_t k = 0;
      for (Config e = support;; e = (e - 1) & support, ++k) {
        const double p = w[k] / z;
        if (p != 0.0) {
          st.e_counts[e] += cell.count * p;
          for (std::size_t j = 0; j < n; ++j) {
            const Config mj = var_mask(n, j);
            if ((on_free & mj) && !(e & mj)) e_off[j] += p;
          }
        }
        if (e == 0) break;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const Config mj = var_mask(n, j);
        if (!(block.free_mask & mj)) continue;
        const Config key = x & parent_mask[j];
        if (x & mj) {
          st.on[j][key] += cell.count * e_off[j];
        } else {
          st.off[j][key] += cell.count;
        }
      }
    }
  }
  return st;
}

inline NodeObjective node_objective(const Model& m, std::size_t j, const EmStats& st) {
  const std::size_t n = m.size();
  const auto& parents = m.parents(j);
  std::vector<double> signs;
  for (const auto& p : parents) signs.push_back(p.b < 0.0 ? -1.0 : 1.0);
  std::vector<NodeObjective::Row> rows;
  for (Config key = 0; key < st.on[j].size(); ++key) {
    const double off = st.off[j][key], on = st.on[j][key];
    if (off == 0.0 && on == 0.0) continue;
    std::uint32_t active = 0;
    for (std::size_t s = 0; s < parents.size(); ++s) {
      const bool xp = bit_of(key, n, parents[s].from);
      if (xp == (parents[s].b > 0.0)) active |= 1u << s;
    }
    rows.push_back({active, off, on});
  }
  return NodeObjective(std::move(signs), std::move(rows));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace detail

/// One EM run from `start`. Links keep their signs and support; P(E) and
/// the magnitudes are re-estimated until the per-sample change in
/// log-likelihood (log-posterior under MAP) drops below the tolerance.
inline EmFit em_fit(const Dataset& data, const Model& start, const EmOptions& opts = {}) {
  data.check();
  const std::size_t n = data.size();
  require(start.size() == n, "start model and dataset disagree on the variables");
  require(n <= kMaxEmVariables,
          "EM is capped at n = " + std::to_string(kMaxEmVariables) + " observed variables");
  const std::size_t size = config_count(n);
  const detail::EmData compact = detail::compact(data);
  double pseudo = 0.0;
  if (opts.map) {
    pseudo = opts.pseudo_count.value_or(0.01 * compact.total / static_cast<double>(size));
    require(pseudo >= 0.0, "pseudo-count must be non-negative");
  }

  EmFit fit{start, {}, -INFINITY, false, false};
  Model cur = start;
  double prev = -INFINITY;
  for (std::size_t iter = 0; iter <= opts.max_iterations; ++iter) {
    detail::EmStats st = detail::e_step(cur, compact);
    double objective = st.log_likelihood;
    if (pseudo > 0.0) {
      for (double p : cur.disturbance()) objective += pseudo * std::log(p);
    }
    const double slack = 1e-8 * std::max(1.0, std::abs(objective));
    if (objective < prev - slack) {
      throw Error(ErrorKind::Numerical, "EM objective decreased from " + std::to_string(prev) +
                                            " to " + std::to_string(objective));
    }
    fit.objective = objective;
    fit.model = cur;
    if (iter > 0) {
      const double change = std::abs(objective - prev) / std::max(1.0, compact.total);
      if (change < opts.tolerance) {
        fit.converged = true;
        break;
      }
    }
    if (iter == opts.max_iterations) break;
    prev = objective;

    // M-step: P(E)
    std::vector<double> pe(size);
    double total = 0.0;
    for (Config e = 0; e < size; ++e) {
      pe[e] = st.e_counts[e] + pseudo;
      total += pe[e];
    }
    for (double& p : pe) p /= total;

    // M-step: links, node by node
    LinkMap links;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& parents = cur.parents(j);
      if (parents.empty()) continue;
      const NodeObjective obj = detail::node_objective(cur, j, st);
      Eigen::VectorXd theta(static_cast<Eigen::Index>(parents.size()));
      double weight = 0.0;
      for (Config key = 0; key < size; ++key) weight += st.on[j][key] + st.off[j][key];
      for (std::size_t s = 0; s < parents.size(); ++s) {
        theta(static_cast<Eigen::Index>(s)) = std::clamp(
            detail::logit(std::abs(parents[s].b)), -kThetaBound, kThetaBound);
      }
      auto res = maximize_node(obj, theta, weight, opts.inner_tolerance);
      if (!res.improved_or_stationary) fit.inner_flagged = true;
      for (std::size_t s = 0; s < parents.size(); ++s) {
        const double mag = NodeObjective::sigmoid(res.theta(static_cast<Eigen::Index>(s)));
        links[{parents[s].from, j}] = obj.signs()[s] * std::clamp(mag, 1e-15, 1.0 - 1e-15);
      }
    }
    Model next(cur.names(), cur.order(), std::move(links), std::move(pe));

    double delta = 0.0;
    for (const auto& [key, b] : next.links()) {
      delta = std::max(delta, std::abs(b - cur.link(key.first, key.second)));
    }
    for (Config e = 0; e < size; ++e) {
      delta = std::max(delta, std::abs(next.disturbance()[e] - cur.disturbance()[e]));
    }
    fit.trace.push_back({iter + 1, objective, delta});
    cur = std::move(next);
  }
  return fit;
}

/// Complete DAG over `order`; each link's sign comes from `signs` when it
/// holds the pair and is positive otherwise.
inline LinkMap complete_structure(const std::vector<std::size_t>& order, const LinkMap& signs,
                                  double magnitude) {
  LinkMap out;
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      auto it = signs.find({order[a], order[b]});
      const double s = (it != signs.end() && it->second < 0.0) ? -1.0 : 1.0;
      out[{order[a], order[b]}] = s * magnitude;
    }
  }
  return out;
}

/// Raw contrast P(X_j=1 | X_i=1) - P(X_j=1 | X_i=0) with no conditioning,
/// from the largest experiment intervening on i and not on j; 0 if none.
inline double marginal_contrast(const Dataset& data, std::size_t i, std::size_t j) {
  const DatasetEntry* best = nullptr;
  for (const auto& e : data.entries) {
    if (!e.experiment.intervenes(i) || e.experiment.intervenes(j)) continue;
    if (!best || e.total() > best->total()) best = &e;
  }
  if (!best) return 0.0;
  auto r = causal_power(*best, data.size(), i, j, {});
  return r.status == CpStatus::NoData ? 0.0 : r.estimate.contrast;
}

/// Causal order, starting points, EM from each, best objective kept.
inline LearnedModel run_em(const Dataset& data, const EmOptions& opts = {}) {
  data.check();
  const std::size_t n = data.size();
  require(n <= kMaxEmVariables,
          "EM is capped at n = " + std::to_string(kMaxEmVariables) + " observed variables");
  const std::size_t size = config_count(n);
  const std::vector<double> uniform_pe(size, 1.0 / static_cast<double>(size));

  CausalOrder order;
  if (opts.fixed_order) {
    order.order = *opts.fixed_order;
    order.ancestor.assign(n, std::vector<char>(n, 0));
  } else {
    order = find_causal_order(data, opts.order);
  }

  std::vector<Model> starts;
  std::vector<PairDiagnostic> ec_pairs;
  if (opts.init) {
    starts.push_back(*opts.init);
  } else {
    // signed estimates for every ordered pair from a quick EC pass
    LinkMap first;
    LinkMap signs;
    if (!opts.structure) {
      EcLinks ec = ec_links(data, order.order, opts.ec);
      for (const auto& p : ec.pairs) {
        double s = p.estimate;
        if (s == 0.0 && !p.provenance.empty()) s = p.provenance.front().contrast;
        signs[{p.cause, p.effect}] = s < 0.0 ? -1.0 : 1.0;
        const double mag = p.status == PairStatus::Edge ? std::clamp(std::abs(p.estimate), 0.05, 0.95)
                                                        : 0.05;
        first[{p.cause, p.effect}] = (s < 0.0 ? -1.0 : 1.0) * mag;
      }
      ec_pairs = std::move(ec.pairs);
    } else {
      for (const auto& [key, b] : *opts.structure) {
        signs[key] = b < 0.0 ? -1.0 : 1.0;
        first[key] = signs[key] * std::clamp(std::abs(b), 0.05, 0.95);
      }
    }
    LinkMap skeleton = opts.structure ? signs : complete_structure(order.order, signs, 1.0);
    for (auto& [key, b] : skeleton) b = first.count(key) ? first.at(key) : 0.05 * b;
    starts.emplace_back(data.names, order.order, skeleton, uniform_pe);
    // Later starts keep the signs of accepted edges and read the others off
    // the unconditioned contrast, which is less noisy than a conditioned one.
    LinkMap alt_signs = skeleton;
    if (!opts.structure) {
      for (const auto& p : ec_pairs) {
        if (p.status == PairStatus::Edge) continue;
        const double c = marginal_contrast(data, p.cause, p.effect);
        if (c != 0.0) alt_signs[{p.cause, p.effect}] = c;
      }
    }
    Rng rng(derive_seed(opts.seed, 7));
    for (std::size_t r = 1; r < std::max<std::size_t>(opts.restarts, 1); ++r) {
      LinkMap l = alt_signs;
      for (auto& [key, b] : l) b = (b < 0.0 ? -1.0 : 1.0) * uniform(rng, 0.1, 0.9);
      starts.emplace_back(data.names, order.order, std::move(l), uniform_pe);
    }
  }

  std::optional<EmFit> best;
  for (const auto& s : starts) {
    EmFit fit = em_fit(data, s, opts);
    if (!best || fit.objective > best->objective) best = std::move(fit);
  }

  std::vector<PairDiagnostic> pairs;
  const auto& pos = order.order;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double v = best->model.link(pos[a], pos[b]);
      PairDiagnostic d{pos[a], pos[b],
                       std::abs(v) >= opts.prune_threshold ? PairStatus::Edge : PairStatus::NoEdge,
                       v, {}, std::nullopt};
      for (const auto& p : ec_pairs) {
        if (p.cause == d.cause && p.effect == d.effect) d.provenance = p.provenance;
      }
      pairs.push_back(std::move(d));
    }
  }
  DisturbanceDiagnostic dd;
  dd.method = opts.map ? "em_map" : "em";
  dd.iterations = best->trace.size();
  dd.converged = best->converged;
  dd.flagged = !best->converged || best->inner_flagged;
  Model pruned = prune_links(best->model, opts.prune_threshold);
  return LearnedModel{"em",     best->model,           std::move(order), std::move(pairs),
                      dd,       std::move(best->trace), std::move(pruned)};
}

}  // namespace noisyor
