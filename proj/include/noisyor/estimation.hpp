#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "noisyor/dataset.hpp"
#include "noisyor/model.hpp"

namespace noisyor {

struct EmpiricalConditional {
  double probability;  // P(X_target = 1 | given)
  double support;      // (possibly fractional) count in the stratum
};

/// Relative frequency of X_target = 1 among rows matching `given`; nullopt
/// when the stratum is empty.
inline std::optional<EmpiricalConditional> empirical_conditional(const DatasetEntry& data,
                                                                 std::size_t n,
                                                                 std::size_t target,
                                                                 const Context& given) {
  require(target < n, "unknown target variable");
  const Pattern cond = make_pattern(n, given);
  require(!cond.mentions(n, target), "conditioning set mentions the target");
  const Config tm = var_mask(n, target);
  double on = 0.0, all = 0.0;
  for (Config x = 0; x < data.counts.size(); ++x) {
    if (!cond.matches(x)) continue;
    all += data.counts[x];
    if (x & tm) on += data.counts[x];
  }
  if (!(all > 0.0)) return std::nullopt;
  return EmpiricalConditional{on / all, all};
}

enum class SignMode { Auto, Positive, Negative };

struct CpOptions {
  // Denominators below this are reported as unreliable.
  double epsilon = 1e-6;
  // Estimates are clamped to |b| <= max_magnitude so they stay valid links.
  double max_magnitude = 1.0 - 1e-6;
};

/// One causal-power estimate of the link i -> j within the stratum where
/// every variable of `conditioning` is 0.
struct CpEstimate {
  std::size_t cause = 0;
  std::size_t effect = 0;
  std::vector<std::size_t> conditioning;
  std::string experiment;
  double value = 0.0;  // signed estimate of b_ij
  double contrast = 0.0;  // P(j=1 | i=1, C=0) - P(j=1 | i=0, C=0)
  double support_on = 0.0;   // stratum count with X_i = 1
  double support_off = 0.0;  // stratum count with X_i = 0

  double weight() const { return support_on + support_off; }
};

enum class CpStatus { Ok, NoData, Unreliable };

struct CpResult {
  CpStatus status = CpStatus::NoData;
  CpEstimate estimate;

  bool ok() const { return status == CpStatus::Ok; }
};

/// Cheng's causal power of X_i on X_j, conditioned on X_C = 0, in an
/// experiment that intervenes on i but not on j. A negative contrast is
/// read as a negative link: the parent is negated, the standard formula
/// applied, and the result returned with a minus sign. SignMode forces one
/// reading; a contrast against the forced sign yields 0.
inline CpResult causal_power(const DatasetEntry& data, std::size_t n, std::size_t i,
                             std::size_t j, const std::vector<std::size_t>& conditioning,
                             SignMode sign = SignMode::Auto, const CpOptions& opts = {}) {
  require(i < n && j < n && i != j, "causal power needs two distinct variables");
  require(data.experiment.intervenes(i), "causal power needs the cause to be intervened");
  require(!data.experiment.intervenes(j), "causal power needs the effect to be observed");
  const Pattern stratum = zero_pattern(n, conditioning);
  require(!stratum.mentions(n, i) && !stratum.mentions(n, j),
          "conditioning set must exclude cause and effect");

  const Config im = var_mask(n, i), jm = var_mask(n, j);
  double n1 = 0.0, k1 = 0.0, n0 = 0.0, k0 = 0.0;
  for (Config x = 0; x < data.counts.size(); ++x) {
    if (!stratum.matches(x)) continue;
    const double c = data.counts[x];
    if (x & im) {
      n1 += c;
      if (x & jm) k1 += c;
    } else {
      n0 += c;
      if (x & jm) k0 += c;
    }
  }

  CpResult r;
  r.estimate.cause = i;
  r.estimate.effect = j;
  r.estimate.conditioning = conditioning;
  r.estimate.experiment = data.id;
  r.estimate.support_on = n1;
  r.estimate.support_off = n0;
  if (!(n1 > 0.0) || !(n0 > 0.0)) {
    r.status = CpStatus::NoData;
    return r;
  }
  const double p1 = k1 / n1, p0 = k0 / n0;
  r.estimate.contrast = p1 - p0;

  bool negative = false;
  switch (sign) {
    case SignMode::Auto: negative = p1 < p0; break;
    case SignMode::Positive: negative = false; break;
    case SignMode::Negative: negative = true; break;
  }
  // Negating the parent swaps the roles of p1 and p0.
  const double on = negative ? p0 : p1;
  const double base = negative ? p1 : p0;
  if (1.0 - base < opts.epsilon) {
    r.status = CpStatus::Unreliable;
    return r;
  }
  const double mag = std::clamp((on - base) / (1.0 - base), 0.0, opts.max_magnitude);
  r.estimate.value = negative ? -mag : mag;
  r.status = CpStatus::Ok;
  return r;
}

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double stratum = 0.0;
  double min_expected = 0.0;
  bool degenerate = false;  // a row or column of the 2x2 table is empty

  // Not significant when degenerate or when an expected cell count falls
  // below `min_expected_count`.
  bool significant(double alpha, double min_expected_count = 5.0) const {
    return !degenerate && min_expected >= min_expected_count && p_value < alpha;
  }
};

// Survival function of the chi-square distribution with one degree of freedom.
inline double chi_square1_sf(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(0.5 * x)); }

/// Pearson chi-square test of X_a vs X_b on the 2x2 table restricted to rows
/// matching `given` (1 degree of freedom).
inline ChiSquareResult chi_square_independence(const DatasetEntry& data, std::size_t n,
                                               std::size_t a, std::size_t b,
                                               const Context& given) {
  require(a < n && b < n && a != b, "independence test needs two distinct variables");
  const Pattern cond = make_pattern(n, given);
  require(!cond.mentions(n, a) && !cond.mentions(n, b),
          "conditioning set must exclude the tested variables");
  const Config am = var_mask(n, a), bm = var_mask(n, b);
  double t[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (Config x = 0; x < data.counts.size(); ++x) {
    if (!cond.matches(x)) continue;
    t[(x & am) ? 1 : 0][(x & bm) ? 1 : 0] += data.counts[x];
  }
  ChiSquareResult r;
  const double total = t[0][0] + t[0][1] + t[1][0] + t[1][1];
  r.stratum = total;
  const double row0 = t[0][0] + t[0][1], row1 = t[1][0] + t[1][1];
  const double col0 = t[0][0] + t[1][0], col1 = t[0][1] + t[1][1];
  if (!(row0 > 0.0) || !(row1 > 0.0) || !(col0 > 0.0) || !(col1 > 0.0)) {
    r.degenerate = true;
    return r;
  }
  r.min_expected = std::min(row0, row1) * std::min(col0, col1) / total;
  const double cross = t[1][1] * t[0][0] - t[1][0] * t[0][1];
  r.statistic = total * cross / row0 * cross / row1 / col0 / col1;
  r.p_value = chi_square1_sf(r.statistic);
  return r;
}

}  // namespace noisyor
