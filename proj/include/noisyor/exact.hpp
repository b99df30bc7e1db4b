#pragma once

#include <cmath>
#include <vector>

#include "noisyor/model.hpp"

namespace noisyor {

namespace detail {

// Maps P(E) to P(X || I) in place, one variable at a time in causal order.
// Before the step for variable k the working vector is indexed by x-bits for
// the variables already processed and e-bits for the rest; the step replaces
// the e_k bit by x_k. activation(k, idx) must only read the bits of k's
// parents, which are x-bits by then.
template <class Activation>
void propagate(std::vector<double>& v, std::size_t n,
               const std::vector<std::size_t>& order, const ExperimentSpec& exp,
               Activation&& activation) {
  const std::size_t size = config_count(n);
  for (std::size_t k : order) {
    const Config m = var_mask(n, k);
    if (exp.intervenes(k)) {
      const double q = exp.probability(k);
      for (Config idx = 0; idx < size; ++idx) {
        if (idx & m) continue;
        const double s = v[idx] + v[idx | m];
        v[idx] = s * (1.0 - q);
        v[idx | m] = s * q;
      }
    } else {
      for (Config idx = 0; idx < size; ++idx) {
        if (idx & m) continue;
        const double a = v[idx];
        const double p = activation(k, idx);
        v[idx] = a * (1.0 - p);
        v[idx | m] += a * p;
      }
    }
  }
}

// Transpose of propagate: maps a gradient over x-configurations back to
// e-configurations.
template <class Activation>
void propagate_adjoint(std::vector<double>& g, std::size_t n,
                       const std::vector<std::size_t>& order,
                       const ExperimentSpec& exp, Activation&& activation) {
  const std::size_t size = config_count(n);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t k = *it;
    const Config m = var_mask(n, k);
    if (exp.intervenes(k)) {
      const double q = exp.probability(k);
      for (Config idx = 0; idx < size; ++idx) {
        if (idx & m) continue;
        const double s = g[idx] * (1.0 - q) + g[idx | m] * q;
        g[idx] = s;
        g[idx | m] = s;
      }
    } else {
      for (Config idx = 0; idx < size; ++idx) {
        if (idx & m) continue;
        const double p = activation(k, idx);
        g[idx] = g[idx] * (1.0 - p) + g[idx | m] * p;
      }
    }
  }
}

inline auto model_activation(const Model& model) {
  return [&model](std::size_t k, Config x) {
    return link_activation(model.parents(k), model.size(), x);
  };
}

}  // namespace detail

/// P(X || I) for the given experiment. Intervened variables are drawn from
/// their intervention probabilities and ignore their parents and disturbances.
inline Distribution exact_distribution(const Model& model, const ExperimentSpec& exp) {
  exp.check(model.size());
  std::vector<double> v = model.disturbance();
  detail::propagate(v, model.size(), model.order(), exp, detail::model_activation(model));
  return Distribution(model.size(), std::move(v));
}

/// Maps an arbitrary vector p_E through the transfer matrix P(X | E || I)
/// (not necessarily a probability vector).
inline std::vector<double> apply_transfer(const Model& model, const ExperimentSpec& exp,
                                          std::vector<double> p_e) {
  require(p_e.size() == config_count(model.size()), "vector must have 2^n entries");
  detail::propagate(p_e, model.size(), model.order(), exp, detail::model_activation(model));
  return p_e;
}

inline std::vector<double> apply_transfer_transpose(const Model& model,
                                                    const ExperimentSpec& exp,
                                                    std::vector<double> g) {
  require(g.size() == config_count(model.size()), "vector must have 2^n entries");
  detail::propagate_adjoint(g, model.size(), model.order(), exp,
                            detail::model_activation(model));
  return g;
}

inline double probability_of(const Distribution& dist, const Pattern& event) {
  double s = 0.0;
  for (Config x = 0; x < dist.probs.size(); ++x) {
    if (event.matches(x)) s += dist.probs[x];
  }
  return s;
}

/// P(X_target = value | given) computed exactly from the joint vector.
inline double conditional_query(const Distribution& dist, std::size_t target,
                                bool target_value, const Context& given) {
  require(target < dist.n, "unknown target variable");
  const Pattern cond = make_pattern(dist.n, given);
  require(!cond.mentions(dist.n, target), "conditioning set mentions the target");
  const Config tm = var_mask(dist.n, target);
  double joint = 0.0, marg = 0.0;
  for (Config x = 0; x < dist.probs.size(); ++x) {
    if (!cond.matches(x)) continue;
    marg += dist.probs[x];
    if (((x & tm) != 0) == target_value) joint += dist.probs[x];
  }
  if (!(marg > 0.0)) {
    throw Error(ErrorKind::UndefinedConditional,
                "conditioning event has probability zero");
  }
  return joint / marg;
}

}  // namespace noisyor
