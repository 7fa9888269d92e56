#pragma once

#include <cstddef>

// Scalar special functions backing the distributional plumbing: copula
// transforms, gamma quantiles, Rubin-pooling t quantiles and test p-values.

namespace mdt {

double expit(double x);
double logit(double p);

double norm_cdf(double x);
double norm_quantile(double p);

// regularized lower incomplete gamma P(a, x)
double gamma_p(double a, double x);
// quantile of Gamma(shape, rate): smallest x with P(shape, rate*x) = p
double gamma_quantile(double shape, double rate, double p);

// regularized incomplete beta I_x(a, b)
double inc_beta(double a, double b, double x);

// two-sided Student-t quantile, p in (0,1); df may be non-integral
double t_quantile(double df, double p);

// upper tail of chi-squared with df degrees of freedom
double chi2_sf(double x, double df);

// Kolmogorov asymptotic survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2k^2 lambda^2}
double kolmogorov_sf(double lambda);

}  // namespace mdt
