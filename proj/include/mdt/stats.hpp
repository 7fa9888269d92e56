#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mdt {

double mean(std::span<const double> x);
// sample variance (n-1 denominator)
double variance(std::span<const double> x);
double sd(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);

// empirical quantile with linear interpolation (R type 7)
double quantile(std::vector<double> x, double p);

// Kendall tau-a = (concordant - discordant) / (n(n-1)/2), ties contribute 0.
// O(n log n) merge-sort inversion count.
double kendall_tau_a(std::span<const double> x, std::span<const double> y);

// two-sample Kolmogorov-Smirnov: statistic and asymptotic p-value
struct KsResult {
  double statistic;
  double p_value;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// chi-squared independence test on a contingency table [rows][cols]
double chi2_independence_p(const std::vector<std::vector<double>>& table);

}  // namespace mdt
