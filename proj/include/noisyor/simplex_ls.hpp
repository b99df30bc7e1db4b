#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "noisyor/error.hpp"

namespace noisyor {

/// Euclidean projection onto {p : p >= 0, sum p = 1}.
inline std::vector<double> project_to_simplex(const std::vector<double>& v) {
  require(!v.empty(), "cannot project an empty vector");
  std::vector<double> s = v;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cum += s[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (s[k] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i] - theta);
  return out;
}

struct SimplexLsOptions {
  double tolerance = 1e-10;  // on the gradient mapping, max norm
  std::size_t max_iterations = 100000;
  std::size_t power_iterations = 30;
};

struct SimplexLsResult {
  std::vector<double> x;
  double objective = 0.0;  // 0.5 ||A x - b||^2
  double kkt = 0.0;        // gradient mapping at x
  std::size_t iterations = 0;
  bool converged = false;
};

/// min 0.5 ||A x - b||^2 over the probability simplex, with A given only
/// through `forward` (x -> A x) and `adjoint` (r -> A^T r). Accelerated
/// projected gradient with backtracking on the step size and gradient-based
/// restarts.
template <class Forward, class Adjoint>
SimplexLsResult simplex_least_squares(Forward&& forward, Adjoint&& adjoint,
                                      const std::vector<double>& b,
                                      std::vector<double> x0,
                                      const SimplexLsOptions& opts = {}) {
  const std::size_t dim = x0.size();
  require(dim > 0, "empty unknown vector");
  auto dot = [](const std::vector<double>& u, const std::vector<double>& v) {
    return std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
  };
  auto residual = [&](const std::vector<double>& ax) {
    std::vector<double> r(ax.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = ax[i] - b[i];
    return r;
  };

  // Largest eigenvalue of A^T A from a deterministic start; backtracking
  // below repairs any underestimate.
  double lip = 0.0;
  {
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
    for (std::size_t it = 0; it < opts.power_iterations; ++it) {
      const double norm = std::sqrt(dot(v, v));
      if (!(norm > 0.0)) break;
      for (double& e : v) e /= norm;
      v = adjoint(forward(v));
      lip = std::sqrt(dot(v, v));
    }
  }
  if (!(lip > 0.0)) lip = 1.0;

  std::vector<double> x = project_to_simplex(x0);
  std::vector<double> ax = forward(x);
  require(ax.size() == b.size(), "operator output does not match the target size");
  std::vector<double> y = x, ay = ax;
  double t = 1.0;

  SimplexLsResult out;
  std::vector<double> step(dim), x_new, ax_new;
  for (std::size_t iter = 1; iter <= opts.max_iterations; ++iter) {
    out.iterations = iter;
    const std::vector<double> ry = residual(ay);
    const double fy = 0.5 * dot(ry, ry);
    const std::vector<double> g = adjoint(ry);
    double gap = 0.0;
    for (;;) {
      for (std::size_t i = 0; i < dim; ++i) step[i] = y[i] - g[i] / lip;
      x_new = project_to_simplex(step);
      ax_new = forward(x_new);
      const auto rn = residual(ax_new);
      double lin = 0.0, quad = 0.0;
      gap = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = x_new[i] - y[i];
        lin += g[i] * d;
        quad += d * d;
        gap = std::max(gap, std::abs(d));
      }
      if (0.5 * dot(rn, rn) <= fy + lin + 0.5 * lip * quad + 1e-15 * (1.0 + fy)) break;
      lip *= 2.0;
    }
    if (lip * gap < opts.tolerance) {
      x = std::move(x_new);
      ax = std::move(ax_new);
      out.converged = true;
      break;
    }
    double progress = 0.0;
    for (std::size_t i = 0; i < dim; ++i) progress += g[i] * (x_new[i] - x[i]);
    if (progress > 0.0) {
      t = 1.0;
      y = x_new;
      ay = ax_new;
    } else {
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_new;
      for (std::size_t i = 0; i < dim; ++i) y[i] = x_new[i] + beta * (x_new[i] - x[i]);
      for (std::size_t i = 0; i < ay.size(); ++i) ay[i] = ax_new[i] + beta * (ax_new[i] - ax[i]);
      t = t_new;
    }
    x = std::move(x_new);
    ax = std::move(ax_new);
  }

  const auto r = residual(ax);
  out.objective = 0.5 * dot(r, r);
  const auto g = adjoint(r);
  for (std::size_t i = 0; i < dim; ++i) step[i] = x[i] - g[i] / lip;
  const auto px = project_to_simplex(step);
  for (std::size_t i = 0; i < dim; ++i) out.kkt = std::max(out.kkt, lip * std::abs(px[i] - x[i]));
  out.x = std::move(x);
  return out;
}

}  // namespace noisyor
