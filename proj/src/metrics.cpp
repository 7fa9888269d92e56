#include "mdt/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace mdt {

std::string CellKey::to_string() const {
  return "dgp" + std::to_string(dgp) + "/L" + std::to_string(level) + "/" + mdag +
         "/" + method;
}

CellSummary summarize(std::span<const RepEstimate> reps, double theta_true) {
  CellSummary out;
  double sum = 0.0;
  std::size_t covered = 0;
  std::vector<double> ates;
  for (const auto& r : reps) {
    if (r.failed) {
      ++out.failures;
      continue;
    }
    if (r.ci_low > r.ci_high)
      throw std::invalid_argument("summarize: inverted CI in rep " +
                                  std::to_string(r.rep));
    ates.push_back(r.ate);
    sum += r.ate;
    if (r.ci_low <= theta_true && theta_true <= r.ci_high) ++covered;
  }
  out.n_used = ates.size();
  if (out.n_used == 0) throw std::invalid_argument("summarize: no usable reps");
  const double n = static_cast<double>(out.n_used);
  out.mean_ate = sum / n;

  double ss = 0.0, se2 = 0.0;
  for (double a : ates) {
    ss += (a - out.mean_ate) * (a - out.mean_ate);
    se2 += (a - theta_true) * (a - theta_true);
  }
  out.sd_ate = out.n_used > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  out.rmse = std::sqrt(se2 / n);

  if (theta_true == 0.0)
    throw std::invalid_argument("summarize: relative bias undefined for theta = 0");
  out.rel_bias_pct = (out.mean_ate - theta_true) / theta_true * 100.0;
  out.rel_bias_mcse_pct = out.sd_ate / std::sqrt(n) / std::fabs(theta_true) * 100.0;

  out.coverage = static_cast<double>(covered) / n;
  out.coverage_mcse = std::sqrt(out.coverage * (1.0 - out.coverage) / n);
  return out;
}

std::pair<double, double> coverage_mc_window(double nominal, std::size_t n_sim) {
  const double half =
      1.959963984540054 * std::sqrt(nominal * (1.0 - nominal) / static_cast<double>(n_sim));
  return {nominal - half, nominal + half};
}

}  // namespace mdt
