#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/glm.hpp"
#include "mdt/rng.hpp"

namespace mdt::mi {

enum class ColumnMethod { pmm, logistic, polytomous, bayes_linear, cart, rf };

struct CartParams {
  int min_leaf = 5;
  double cp = 1e-4;
  int max_depth = 30;
};

struct RfParams {
  int trees = 10;
  bool bootstrap = true;
  int mtry = 0;  // 0 = floor(sqrt(p))
};

struct FcsSpec {
  int m = 100;
  int iterations = 10;
  // per-column method; columns without missingness need no entry
  std::map<std::string, ColumnMethod> methods;
  // passive interaction columns recomputed from imputed main effects after
  // every column visit; tuples of base column names
  std::vector<std::vector<std::string>> interactions;
  CartParams cart;
  RfParams rf;
  int pmm_donors = 5;

  // type-driven default map: pmm for the outcome, logistic for binary,
  // polytomous for categorical, Bayesian linear for continuous
  static FcsSpec parametric_default(const Dataset& d, const std::string& y_col);
  // every incomplete column handled by one tree engine
  static FcsSpec tree_default(const Dataset& d, ColumnMethod engine);
};

struct ImputationSet {
  std::vector<Dataset> completed;
  std::string engine;
  // traces[col][chain][iteration] = mean of imputed cells
  std::map<std::string, std::vector<std::vector<double>>> traces;
  int fallback_events = 0;  // column-model failures that fell back to marginal draws
  int ridge_events = 0;     // EM covariance repairs
};

ImputationSet fcs_impute(const Dataset& d, const FcsSpec& spec, RngStream& rng);

// EM-with-bootstrap joint multivariate normal imputation; categoricals are
// one-hot embedded and mapped back by argmax, binaries thresholded at 0.5,
// positive columns modeled on the log scale
ImputationSet emb_impute(const Dataset& d, int m, RngStream& rng,
                         double loglik_tol = 1e-6, int max_sweeps = 500);

// one predictive-mean-matching draw: bayesian coefficient draw, match the
// x_new prediction to the k nearest donor predictions, return one donor's
// observed outcome
double pmm_draw(const GlmFit& fit, const Eigen::RowVectorXd& x_new,
                const std::vector<std::pair<double, double>>& donors, int k,
                RngStream& rng);

// regression-tree imputation draws: grow a tree on the observed rows, route
// each target row to its leaf, draw uniformly from the leaf's observed values
std::vector<double> cart_impute_draw(const std::vector<std::vector<double>>& x_obs,
                                     const std::vector<double>& y_obs, bool y_discrete,
                                     const std::vector<std::vector<double>>& x_mis,
                                     const CartParams& params, RngStream& rng);

// bootstrap forest variant: pool the member values of each target row's
// leaves across trees and draw uniformly
std::vector<double> rf_impute_draw(const std::vector<std::vector<double>>& x_obs,
                                   const std::vector<double>& y_obs, bool y_discrete,
                                   const std::vector<std::vector<double>>& x_mis,
                                   const CartParams& cart, const RfParams& rf,
                                   RngStream& rng);

struct PooledEstimate {
  double q_bar = 0.0;
  double within = 0.0;   // mean of squared standard errors
  double between = 0.0;  // sample variance of the estimates
  double total = 0.0;    // within + (1 + 1/m) between
  double df = 0.0;       // Barnard-Rubin small-sample degrees of freedom
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Rubin's rules over per-imputation (estimate, se) pairs; n_complete is the
// analysis sample size entering the small-sample df
PooledEstimate pool(const std::vector<std::pair<double, double>>& estimates,
                    std::size_t n_complete);

}  // namespace mdt::mi
