#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/glm.hpp"
#include "mdt/rng.hpp"

namespace mdt::hal {

struct BasisConfig {
  int max_degree = 2;
  int bins = 20;  // quantile knots per continuous covariate
};

// one zero-order basis function: a product of I(x_j >= knot_j) indicators
struct BasisFunction {
  std::vector<int> covariates;  // indices into HalBasis::covariate_names
  std::vector<double> knots;
};

struct HalBasis {
  std::vector<std::string> covariate_names;
  std::vector<BasisFunction> funcs;
};

// knots: binary -> {1}; numeric -> every distinct value when they fit in
// `bins`, else quantile knots; degree-2 funcs are pairwise products of
// univariate indicators; duplicate indicator columns are removed
HalBasis build_basis(const Dataset& d, const std::vector<std::string>& covariates,
                     std::span<const std::size_t> rows, const BasisConfig& config);

// bit-packed evaluation of a basis on a dataset
struct BasisMatrix {
  std::size_t n = 0;
  std::size_t words = 0;
  std::vector<std::vector<std::uint64_t>> cols;
  std::vector<double> frac;  // popcount / n

  double dot(std::size_t j, const double* v) const;
  void add(std::size_t j, double c, double* v) const;
};

BasisMatrix evaluate_basis(const HalBasis& basis, const Dataset& d,
                           std::span<const std::size_t> rows);

struct HalFit {
  double beta0 = 0.0;
  std::vector<double> beta;  // aligned with basis funcs
  double lambda = 0.0;
  double l1_norm = 0.0;  // |beta0| + sum |beta|, the attained bound C
  bool converged = true;
  Family family = Family::gaussian;
  double sigma2 = 0.0;  // gaussian residual variance at this fit
};

struct LassoOptions {
  int n_lambda = 40;
  double lambda_min_ratio = 1e-3;
  double tol = 1e-7;
  int max_sweeps = 2000;
  int max_outer = 40;  // binomial quadratic approximations
};

// coordinate-descent solutions along a decreasing lambda grid (warm starts);
// the intercept is unpenalized, the reported bound includes it
std::vector<HalFit> lasso_path(const BasisMatrix& X, const std::vector<double>& y,
                               Family family, std::vector<double> lambdas,
                               const LassoOptions& opt = {});

std::vector<double> default_lambda_grid(const BasisMatrix& X,
                                        const std::vector<double>& y, Family family,
                                        const LassoOptions& opt = {});

// max KKT violation across coordinates (0 when stationarity holds exactly)
double kkt_violation(const BasisMatrix& X, const std::vector<double>& y,
                     const HalFit& fit);

// a regression problem routed through the basis machinery
struct HalProblem {
  const Dataset* data = nullptr;
  std::vector<std::string> covariates;
  std::vector<std::size_t> rows;
  std::vector<double> y;
  Family family = Family::gaussian;
  BasisConfig config;
};

struct HalModel {
  HalBasis basis;
  std::vector<std::string> covariates;
  Family family = Family::gaussian;
  std::vector<HalFit> path;
  std::vector<double> cv_risk;  // per path point
  std::size_t cv_index = 0;
  HalFit fit;  // the selected (and possibly undersmoothed) fit
  double c_cv = 0.0;
  double c_u = 0.0;
  bool undersmoothed = false;
  bool undersmooth_converged = true;

  Eigen::VectorXd predict(const Dataset& d, std::span<const std::size_t> rows) const;
};

// cross-validated lasso over the shared lambda grid
HalModel fit_cv(const HalProblem& prob, int folds, RngStream& rng,
                const LassoOptions& opt = {});

struct UndersmoothOptions {
  double growth = 1.2;  // multiplicative bound increase per step
  int max_steps = 40;
  double lambda_shrink = 0.7;
};

// relax the bound until every basis function selected by the CV fit has
// |P_n(phi (y - Qbar))| <= sd(phi (y - Qbar_cv)) / (sqrt(n) log n)
void undersmooth(HalModel& model, const HalProblem& prob,
                 const UndersmoothOptions& opt = {});

// design-based generator: resample covariate rows, draw the exposure from the
// binomial fit and the outcome from the gaussian fit plus N(0, sigma2) noise
Dataset synth_generate(const HalModel& exposure_model, const HalModel& outcome_model,
                       const Dataset& pool, const std::vector<std::string>& w_cols,
                       const std::string& a_col, const std::string& y_col,
                       std::size_t n, RngStream& rng);

// Monte Carlo g-formula over rows resampled from the pool
double quasi_true_ate(const HalModel& outcome_model, const Dataset& pool,
                      const std::vector<std::string>& w_cols, const std::string& a_col,
                      std::size_t n_draws, RngStream& rng);

// exact enumeration counterpart (the pool mean), used as the frozen reference
double quasi_true_ate_exact(const HalModel& outcome_model, const Dataset& pool,
                            const std::vector<std::string>& w_cols,
                            const std::string& a_col);

// undersmoothed degree<=2 fit of the exposure given covariates; fraction of
// rows with min(p, 1-p) below the threshold
double assess_positivity(const Dataset& d, const std::vector<std::string>& w_cols,
                         const std::string& a_col, const BasisConfig& config,
                         int folds, RngStream& rng, double threshold = 0.01);

}  // namespace mdt::hal
