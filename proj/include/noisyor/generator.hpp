#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "noisyor/dataset.hpp"
#include "noisyor/exact.hpp"
#include "noisyor/model.hpp"
#include "noisyor/rng.hpp"

namespace noisyor {

struct GenConfig {
  std::size_t n_observed = 8;
  // Latent variables are placed first in the causal order and hidden later.
  std::size_t n_latent = 0;
  std::size_t max_parents = 2;
  double link_min = 0.1;
  double link_max = 0.9;
  double negative_fraction = 0.5;
  double dirichlet_alpha = 1.0;
  // Mixing weight x applied to the drawn disturbance; 0 keeps only the product
  // of its marginals.
  double confounding = 1.0;
  std::uint64_t seed = 1;

  void check() const {
    require(n_observed >= 1, "need at least one observed variable");
    require(n_observed + n_latent <= kMaxVariables,
            "n = " + std::to_string(n_observed + n_latent) +
                " is too large for a 2^n disturbance vector (cap " +
                std::to_string(kMaxVariables) + ")");
    require(link_min > 0.0 && link_max < 1.0 && link_min <= link_max,
            "link range must lie strictly inside (0, 1)");
    require(negative_fraction >= 0.0 && negative_fraction <= 1.0,
            "negative fraction must lie in [0, 1]");
    require(dirichlet_alpha > 0.0, "Dirichlet concentration must be positive");
    require(confounding >= 0.0 && confounding <= 1.0, "confounding must lie in [0, 1]");
  }
};

namespace detail {

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p = identity_order(n);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

}  // namespace detail

/// x * P(E) + (1 - x) * prod_j P(E_j).
inline std::vector<double> mix_disturbance(const std::vector<double>& dist,
                                           std::size_t n, double x) {
  require(x >= 0.0 && x <= 1.0, "confounding weight must lie in [0, 1]");
  std::vector<double> marg(n, 0.0);
  for (Config e = 0; e < dist.size(); ++e) {
    for (std::size_t j = 0; j < n; ++j) {
      if (bit_of(e, n, j)) marg[j] += dist[e];
    }
  }
  std::vector<double> out(dist.size());
  for (Config e = 0; e < dist.size(); ++e) {
    double prod = 1.0;
    for (std::size_t j = 0; j < n; ++j) prod *= bit_of(e, n, j) ? marg[j] : 1.0 - marg[j];
    out[e] = x * dist[e] + (1.0 - x) * prod;
  }
  return out;
}

inline Model mix_confounding(const Model& model, double x) {
  return model.with_disturbance(mix_disturbance(model.disturbance(), model.size(), x));
}

/// Random model: uniformly random causal order, per-node parent count
/// uniform in {0..min(max_parents, predecessors)}, parents chosen uniformly,
/// |b| ~ Unif[link_min, link_max] with sign negative at `negative_fraction`,
/// P(E) ~ Dir(alpha). Observed variables are X1..Xn (indices 0..n-1), latent
/// ones L1..Lk follow them in index but precede them in causal order.
inline Model random_model(const GenConfig& cfg) {
  cfg.check();
  Rng rng(cfg.seed);
  const std::size_t n = cfg.n_observed + cfg.n_latent;
  std::vector<std::string> names = default_names(cfg.n_observed);
  for (std::size_t k = 0; k < cfg.n_latent; ++k) names.push_back("L" + std::to_string(k + 1));

  std::vector<std::size_t> order;
  for (auto k : detail::random_permutation(rng, cfg.n_latent)) order.push_back(cfg.n_observed + k);
  for (auto k : detail::random_permutation(rng, cfg.n_observed)) order.push_back(k);

  LinkMap links;
  for (std::size_t pos = 1; pos < n; ++pos) {
    const std::size_t cap = std::min(cfg.max_parents, pos);
    const std::size_t count = uniform_index(rng, cap + 1);
    std::vector<std::size_t> preds(order.begin(), order.begin() + static_cast<long>(pos));
    for (std::size_t c = 0; c < count; ++c) {
      std::swap(preds[c], preds[c + uniform_index(rng, preds.size() - c)]);
    }
    for (std::size_t c = 0; c < count; ++c) {
      const double mag = uniform(rng, cfg.link_min, cfg.link_max);
      const bool negative = bernoulli(rng, cfg.negative_fraction);
      links[{preds[c], order[pos]}] = negative ? -mag : mag;
    }
  }
  auto disturbance = dirichlet(rng, config_count(n), cfg.dirichlet_alpha);
  if (cfg.confounding < 1.0) disturbance = mix_disturbance(disturbance, n, cfg.confounding);
  return Model(std::move(names), std::move(order), std::move(links), std::move(disturbance));
}

/// Pairwise interaction term of the noisy i-OR generator: for child `node`
/// and parents a, b (a < b), probs[s] is the chance that the interaction
/// fires in sign state s = (++, +-, -+, --) of (X_a, X_b).
struct Interaction {
  std::size_t node;
  std::size_t a;
  std::size_t b;
  std::array<double, 4> probs;
};

struct InteractiveModel {
  Model base;
  std::vector<Interaction> interactions;
  double y = 0.0;
};

inline std::size_t interaction_state(std::size_t n, Config x, const Interaction& it) {
  const bool xa = bit_of(x, n, it.a), xb = bit_of(x, n, it.b);
  return (xa ? 0u : 2u) + (xb ? 0u : 1u);
}

/// Adds interaction probabilities drawn from Unif[0, y] for every pair of
/// parents of every node.
inline InteractiveModel make_interactive(const Model& model, double y, std::uint64_t seed) {
  require(y >= 0.0 && y <= 1.0, "interaction bound y must lie in [0, 1]");
  Rng rng(derive_seed(seed, 0x1a7e));
  InteractiveModel out{model, {}, y};
  for (std::size_t k = 0; k < model.size(); ++k) {
    const auto& ps = model.parents(k);
    for (std::size_t u = 0; u < ps.size(); ++u) {
      for (std::size_t v = u + 1; v < ps.size(); ++v) {
        Interaction it{k, std::min(ps[u].from, ps[v].from), std::max(ps[u].from, ps[v].from), {}};
        for (auto& p : it.probs) p = uniform(rng, 0.0, y);
        out.interactions.push_back(it);
      }
    }
  }
  return out;
}

inline Distribution exact_distribution(const InteractiveModel& im, const ExperimentSpec& exp) {
  const Model& m = im.base;
  const std::size_t n = m.size();
  exp.check(n);
  std::vector<std::vector<const Interaction*>> by_node(n);
  for (const auto& it : im.interactions) by_node.at(it.node).push_back(&it);
  std::vector<double> v = m.disturbance();
  detail::propagate(v, n, m.order(), exp, [&](std::size_t k, Config x) {
    double fail = 1.0 - link_activation(m.parents(k), n, x);
    for (const auto* it : by_node[k]) fail *= 1.0 - it->probs[interaction_state(n, x, *it)];
    return 1.0 - fail;
  });
  return Distribution(n, std::move(v));
}

namespace detail {

// Ancestral sampler. Per sample the main stream yields intervened values
// (ascending index), then E, then every B_ij in link-key order; interaction
// variables come from a separate stream so that a model with all interaction
// probabilities zero reproduces the base sampler bit for bit.
inline std::vector<double> sample_counts(const Model& m,
                                         const std::vector<Interaction>* interactions,
                                         const ExperimentSpec& exp, std::size_t n_samples,
                                         std::uint64_t seed) {
  exp.check(m.size());
  require(n_samples > 0, "need at least one sample");
  const std::size_t n = m.size();
  Rng rng(derive_seed(seed, 1));
  Rng irng(derive_seed(seed, 2));
  DiscreteSampler draw_e(m.disturbance());

  std::vector<std::pair<std::size_t, std::size_t>> link_keys;
  std::vector<double> link_mag;
  std::vector<char> link_positive;
  for (const auto& [key, b] : m.links()) {
    link_keys.push_back(key);
    link_mag.push_back(std::abs(b));
    link_positive.push_back(b > 0.0);
  }
  // Per node: indices of incoming links and interactions.
  std::vector<std::vector<std::size_t>> in_links(n), in_inter(n);
  for (std::size_t l = 0; l < link_keys.size(); ++l) in_links[link_keys[l].second].push_back(l);
  const std::size_t n_inter = interactions ? interactions->size() : 0;
  for (std::size_t t = 0; t < n_inter; ++t) in_inter[(*interactions)[t].node].push_back(t);

  std::vector<double> counts(config_count(n), 0.0);
  std::vector<char> link_on(link_keys.size()), inter_on(n_inter * 4);
  std::vector<char> x(n);
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (const auto& [v, q] : exp.probabilities()) x[v] = bernoulli(rng, q);
    const Config e = static_cast<Config>(draw_e(rng));
    for (std::size_t l = 0; l < link_keys.size(); ++l) link_on[l] = bernoulli(rng, link_mag[l]);
    for (std::size_t t = 0; t < n_inter; ++t) {
      for (std::size_t st = 0; st < 4; ++st) {
        inter_on[t * 4 + st] = bernoulli(irng, (*interactions)[t].probs[st]);
      }
    }
    for (std::size_t j : m.order()) {
      if (exp.intervenes(j)) continue;
      bool on = bit_of(e, n, j);
      for (std::size_t l : in_links[j]) {
        if (on) break;
        const std::size_t i = link_keys[l].first;
        const bool parent = link_positive[l] ? x[i] : !x[i];
        on = link_on[l] && parent;
      }
      for (std::size_t t : in_inter[j]) {
        if (on) break;
        const auto& it = (*interactions)[t];
        const std::size_t st = (x[it.a] ? 0u : 2u) + (x[it.b] ? 0u : 1u);
        on = inter_on[t * 4 + st];
      }
      x[j] = on;
    }
    Config cfg = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (x[v]) cfg |= var_mask(n, v);
    }
    counts[cfg] += 1.0;
  }
  return counts;
}

}  // namespace detail

/// Configuration counts of `n_samples` ancestral draws under `exp`.
inline std::vector<double> sample(const Model& model, const ExperimentSpec& exp,
                                  std::size_t n_samples, std::uint64_t seed) {
  return detail::sample_counts(model, nullptr, exp, n_samples, seed);
}

inline std::vector<double> sample(const InteractiveModel& im, const ExperimentSpec& exp,
                                  std::size_t n_samples, std::uint64_t seed) {
  return detail::sample_counts(im.base, &im.interactions, exp, n_samples, seed);
}

/// Samples every experiment; experiment k uses a stream derived from (seed, k).
template <class Source>
Dataset sample_dataset(const Source& source, const std::vector<std::string>& names,
                       const std::vector<ExperimentSpec>& exps,
                       const std::vector<std::size_t>& samples_per_experiment,
                       std::uint64_t seed) {
  require(!exps.empty(), "no experiments to sample");
  require(samples_per_experiment.size() == exps.size(),
          "need one sample count per experiment");
  Dataset d;
  d.names = names;
  for (std::size_t k = 0; k < exps.size(); ++k) {
    d.entries.push_back({experiment_label(exps[k], names), exps[k],
                         sample(source, exps[k], samples_per_experiment[k],
                                derive_seed(seed, 100 + k))});
  }
  return d;
}

/// Splits `total` as evenly as possible over k experiments, earlier ones
/// taking the remainder.
inline std::vector<std::size_t> split_evenly(std::size_t total, std::size_t k) {
  require(k > 0, "cannot split over zero experiments");
  std::vector<std::size_t> out(k, total / k);
  for (std::size_t i = 0; i < total % k; ++i) ++out[i];
  return out;
}

/// A model whose first `latent_count` variables in causal order are hidden.
/// Distributions and samples are reported over the remaining variables in
/// ascending index order.
class LatentView {
 public:
  LatentView(Model full, std::size_t latent_count)
      : full_(std::move(full)), latent_count_(latent_count) {
    require(latent_count_ < full_.size(), "latent count must be smaller than n");
    std::vector<char> hidden(full_.size(), 0);
    for (std::size_t k = 0; k < latent_count_; ++k) hidden[full_.order()[k]] = 1;
    for (std::size_t v = 0; v < full_.size(); ++v) {
      if (!hidden[v]) observed_.push_back(v);
    }
  }

  const Model& full() const { return full_; }
  std::size_t latent_count() const { return latent_count_; }
  std::size_t size() const { return observed_.size(); }
  const std::vector<std::size_t>& observed() const { return observed_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto v : observed_) out.push_back(full_.names()[v]);
    return out;
  }

  // Links among observed variables, re-indexed to observed positions.
  LinkMap observed_links() const {
    std::vector<std::size_t> pos(full_.size(), full_.size());
    for (std::size_t k = 0; k < observed_.size(); ++k) pos[observed_[k]] = k;
    LinkMap out;
    for (const auto& [key, b] : full_.links()) {
      if (pos[key.first] < full_.size() && pos[key.second] < full_.size()) {
        out[{pos[key.first], pos[key.second]}] = b;
      }
    }
    return out;
  }

  // Causal order restricted to observed variables, in observed indices.
  std::vector<std::size_t> observed_order() const {
    std::vector<std::size_t> pos(full_.size(), full_.size());
    for (std::size_t k = 0; k < observed_.size(); ++k) pos[observed_[k]] = k;
    std::vector<std::size_t> out;
    for (auto v : full_.order()) {
      if (pos[v] < full_.size()) out.push_back(pos[v]);
    }
    return out;
  }

  ExperimentSpec lift(const ExperimentSpec& exp) const {
    exp.check(size());
    std::map<std::size_t, double> m;
    for (const auto& [v, p] : exp.probabilities()) m[observed_[v]] = p;
    return ExperimentSpec(std::move(m));
  }

  Config project(Config full_cfg) const {
    const std::size_t n = full_.size(), k = observed_.size();
    Config out = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (bit_of(full_cfg, n, observed_[i])) out |= var_mask(k, i);
    }
    return out;
  }

  std::vector<double> project(const std::vector<double>& full_vec) const {
    std::vector<double> out(config_count(size()), 0.0);
    for (Config x = 0; x < full_vec.size(); ++x) out[project(x)] += full_vec[x];
    return out;
  }

 private:
  Model full_;
  std::size_t latent_count_;
  std::vector<std::size_t> observed_;
};

inline LatentView marginalize_latents(const Model& model, std::size_t latent_count) {
  return LatentView(model, latent_count);
}

inline Distribution exact_distribution(const LatentView& view, const ExperimentSpec& exp) {
  auto full = exact_distribution(view.full(), view.lift(exp));
  return Distribution(view.size(), view.project(full.probs));
}

inline std::vector<double> sample(const LatentView& view, const ExperimentSpec& exp,
                                  std::size_t n_samples, std::uint64_t seed) {
  return view.project(sample(view.full(), view.lift(exp), n_samples, seed));
}

}  // namespace noisyor
