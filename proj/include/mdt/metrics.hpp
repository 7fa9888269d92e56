#pragma once

#include <span>
#include <string>
#include <vector>

namespace mdt {

struct CellKey {
  int dgp = 0;
  int level = 0;
  std::string mdag;  // "A".."E"
  std::string method;

  std::string to_string() const;
};

struct RepEstimate {
  CellKey key;
  int rep = 0;
  double ate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool failed = false;
  std::string failure_reason;
};

struct CellSummary {
  std::size_t n_used = 0;
  std::size_t failures = 0;
  double mean_ate = 0.0;
  double sd_ate = 0.0;
  double rel_bias_pct = 0.0;
  double rel_bias_mcse_pct = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  double coverage_mcse = 0.0;
};

// relative bias (mean - theta)/theta in percent, RMSE, and CI coverage,
// with Monte Carlo standard errors; failed replications are excluded and
// counted, never imputed
CellSummary summarize(std::span<const RepEstimate> reps, double theta_true);

// the [nominal +- 1.96 sqrt(c(1-c)/n)] band coverage estimates should fall in
std::pair<double, double> coverage_mc_window(double nominal, std::size_t n_sim);

}  // namespace mdt
