#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <vector>

namespace noisyor::test {

struct GoodnessOfFit {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Pearson goodness of fit of observed counts against expected probabilities.
// Cells with expected count below 5 are pooled into one.
inline GoodnessOfFit chi_square_gof(const std::vector<double>& counts,
                                    const std::vector<double>& probs) {
  double total = 0.0;
  for (double c : counts) total += c;
  GoodnessOfFit out;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  int cells = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * total;
    if (e < 5.0) {
      pooled_obs += counts[i];
      pooled_exp += e;
      continue;
    }
    out.statistic += (counts[i] - e) * (counts[i] - e) / e;
    ++cells;
  }
  if (pooled_exp >= 5.0) {
    out.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  }
  out.dof = cells - 1;
  out.p_value = out.dof > 0 ? boost::math::gamma_q(out.dof / 2.0, out.statistic / 2.0) : 1.0;
  return out;
}

}  // namespace noisyor::test
