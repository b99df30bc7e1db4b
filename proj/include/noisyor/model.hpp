#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "noisyor/error.hpp"

namespace noisyor {

// Joint configuration of n binary variables. Variable 0 is the most
// significant bit, so configurations enumerate lexicographically.
using Config = std::uint32_t;

inline constexpr std::size_t kMaxVariables = 20;

inline Config var_mask(std::size_t n, std::size_t v) {
  return Config{1} << (n - 1 - v);
}

inline bool bit_of(Config x, std::size_t n, std::size_t v) {
  return (x & var_mask(n, v)) != 0;
}

inline std::size_t config_count(std::size_t n) { return std::size_t{1} << n; }

struct Assignment {
  std::size_t var;
  bool value;
};
using Context = std::vector<Assignment>;

// Mask/value form of a partial assignment: x matches iff (x & mask) == bits.
struct Pattern {
  Config mask = 0;
  Config bits = 0;

  bool matches(Config x) const { return (x & mask) == bits; }
  bool mentions(std::size_t n, std::size_t v) const {
    return (mask & var_mask(n, v)) != 0;
  }
};

inline Pattern make_pattern(std::size_t n, const Context& ctx) {
  Pattern p;
  for (const auto& a : ctx) {
    require(a.var < n, "assignment refers to unknown variable " +
                           std::to_string(a.var));
    const Config m = var_mask(n, a.var);
    const Config b = a.value ? m : 0;
    require(!(p.mask & m) || (p.bits & m) == b,
            "contradictory assignment for variable " + std::to_string(a.var));
    p.mask |= m;
    p.bits |= b;
  }
  return p;
}

// All variables in `vars` set to zero.
inline Pattern zero_pattern(std::size_t n, const std::vector<std::size_t>& vars) {
  Pattern p;
  for (auto v : vars) p.mask |= var_mask(n, v);
  return p;
}

struct ParentLink {
  std::size_t from;
  double b;  // signed link probability; negative means the parent acts negated
};

// (from, to) -> b
using LinkMap = std::map<std::pair<std::size_t, std::size_t>, double>;

// Checks a probability vector: entries >= 0, sum within 1e-9 of one. The
// residual drift is renormalized away.
inline std::vector<double> normalized_probabilities(std::vector<double> p,
                                                    const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    require(std::isfinite(v) && v >= 0.0, what + " has a negative or non-finite entry");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= 1e-9,
          what + " does not sum to one (sum = " + std::to_string(sum) + ")",
          ErrorKind::Numerical);
  for (double& v : p) v /= sum;
  return p;
}

/// Noisy-OR model with latent confounding over n binary variables.
///
/// Variables are addressed by index; `names` carries the stable external
/// identifiers and `order` the causal order (order[0] is the first cause).
/// Every link points forward in that order and has 0 < |b| < 1. The
/// disturbance vector holds P(E) over all 2^n joint disturbance
/// configurations in the same bit layout as observed configurations.
class Model {
 public:
  Model(std::vector<std::string> names, std::vector<std::size_t> order,
        LinkMap links, std::vector<double> disturbance)
      : names_(std::move(names)),
        order_(std::move(order)),
        links_(std::move(links)) {
    const std::size_t n = names_.size();
    require(n >= 1, "model needs at least one variable");
    require(n <= kMaxVariables,
            "model has " + std::to_string(n) + " variables; the cap is " +
                std::to_string(kMaxVariables));
    {
      std::set<std::string> seen;
      for (const auto& s : names_) {
        require(!s.empty(), "variable names must be nonempty");
        require(seen.insert(s).second, "duplicate variable name " + s);
      }
    }
    require(order_.size() == n, "causal order must list every variable once");
    position_.assign(n, n);
    for (std::size_t k = 0; k < n; ++k) {
      require(order_[k] < n && position_[order_[k]] == n,
              "causal order is not a permutation");
      position_[order_[k]] = k;
    }
    parents_.assign(n, {});
    for (const auto& [key, b] : links_) {
      const auto [from, to] = key;
      require(from < n && to < n, "link refers to unknown variable");
      require(position_[from] < position_[to],
              "link " + names_[from] + "->" + names_[to] +
                  " contradicts the causal order");
      require(std::isfinite(b) && b != 0.0 && std::abs(b) < 1.0,
              "link " + names_[from] + "->" + names_[to] +
                  " must satisfy 0 < |b| < 1");
      parents_[to].push_back({from, b});
    }
    require(disturbance.size() == config_count(n),
            "disturbance must have 2^n entries");
    disturbance_ = normalized_probabilities(std::move(disturbance), "disturbance");
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::size_t>& order() const { return order_; }
  const LinkMap& links() const { return links_; }
  const std::vector<double>& disturbance() const { return disturbance_; }
  const std::vector<ParentLink>& parents(std::size_t j) const { return parents_.at(j); }

  // Rank of variable v in the causal order.
  std::size_t position(std::size_t v) const { return position_.at(v); }

  double link(std::size_t from, std::size_t to) const {
    auto it = links_.find({from, to});
    return it == links_.end() ? 0.0 : it->second;
  }

  std::size_t index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    require(it != names_.end(), "unknown variable " + name);
    return static_cast<std::size_t>(it - names_.begin());
  }

  Model with_disturbance(std::vector<double> disturbance) const {
    return Model(names_, order_, links_, std::move(disturbance));
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> position_;
  LinkMap links_;
  std::vector<std::vector<ParentLink>> parents_;
  std::vector<double> disturbance_;
};

inline std::vector<std::string> default_names(std::size_t n) {
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = "X" + std::to_string(i + 1);
  return names;
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

/// Which variables are randomized, and with what probability of being 1.
/// An empty set is the passive observational regime.
class ExperimentSpec {
 public:
  ExperimentSpec() = default;
  explicit ExperimentSpec(std::map<std::size_t, double> intervention_probs)
      : probs_(std::move(intervention_probs)) {
    for (const auto& [v, p] : probs_) {
      require(std::isfinite(p) && p > 0.0 && p < 1.0,
              "intervention probability for variable " + std::to_string(v) +
                  " must lie strictly inside (0, 1)");
    }
  }

  static ExperimentSpec passive() { return ExperimentSpec(); }
  static ExperimentSpec single(std::size_t v, double p = 0.5) {
    return ExperimentSpec({{v, p}});
  }
  static ExperimentSpec on(const std::vector<std::size_t>& vars, double p = 0.5) {
    std::map<std::size_t, double> m;
    for (auto v : vars) m[v] = p;
    return ExperimentSpec(std::move(m));
  }

  bool is_passive() const { return probs_.empty(); }
  bool intervenes(std::size_t v) const { return probs_.count(v) != 0; }
  double probability(std::size_t v) const { return probs_.at(v); }
  const std::map<std::size_t, double>& probabilities() const { return probs_; }

  std::vector<std::size_t> intervened() const {
    std::vector<std::size_t> out;
    for (const auto& kv : probs_) out.push_back(kv.first);
    return out;
  }

  void check(std::size_t n) const {
    for (const auto& kv : probs_) {
      require(kv.first < n, "experiment intervenes on unknown variable " +
                                std::to_string(kv.first));
    }
  }

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;

 private:
  std::map<std::size_t, double> probs_;
};

/// Probability vector over the 2^n joint configurations.
struct Distribution {
  std::size_t n = 0;
  std::vector<double> probs;

  Distribution() = default;
  Distribution(std::size_t vars, std::vector<double> p) : n(vars), probs(std::move(p)) {
    require(probs.size() == config_count(n), "distribution must have 2^n entries");
    probs = normalized_probabilities(std::move(probs), "distribution");
  }

  double operator[](Config x) const { return probs[x]; }
};

// P(X_j = 1 | parents as in x, E_j = 0): one minus the product of failure
// probabilities of every active link. A negative link is active when its
// parent is 0.
inline double link_activation(const std::vector<ParentLink>& parents,
                              std::size_t n, Config x) {
  double fail = 1.0;
  for (const auto& p : parents) {
    const bool on = bit_of(x, n, p.from);
    if (p.b > 0.0 ? on : !on) fail *= 1.0 - std::abs(p.b);
  }
  return 1.0 - fail;
}

/// P(X_j = 1 | parent values, E_j). The parent values are read from the
/// matching bits of `x`; other bits are ignored.
inline double node_conditional(const Model& model, std::size_t j, Config x, bool e_j) {
  require(j < model.size(), "unknown variable index " + std::to_string(j));
  if (e_j) return 1.0;
  return link_activation(model.parents(j), model.size(), x);
}

}  // namespace noisyor
