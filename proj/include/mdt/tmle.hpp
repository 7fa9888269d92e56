#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/rng.hpp"
#include "mdt/superlearner.hpp"

namespace mdt::tmle {

enum class Flavor { standard, extended, ext_mcmi };

struct Options {
  double g_trunc = 0.01;   // propensity floor: min(g, 1-g) >= g_trunc
  double my_trunc = 0.01;  // floor for P(M_Y = 0 | A, W)
  double q_bound = 0.005;  // clamp for the initial fit on the [0,1] scale
  int sl_folds = 10;
};

// Test/diagnostic hook: any nuisance supplied here bypasses its SuperLearner.
// Vectors are aligned with the rows of the dataset passed to estimate().
struct NuisanceOverrides {
  std::optional<Eigen::VectorXd> g1;              // P(A=1 | W)
  std::optional<Eigen::VectorXd> q_obs, q1, q0;   // on the original Y scale
  std::optional<Eigen::VectorXd> p_my_obs1, p_my_obs0;  // P(M_Y=0 | A=a, W)
};

struct ScaledOutcome {
  std::vector<double> y01;
  double y_min = 0.0;
  double y_max = 1.0;
};

// affine map of the observed outcome onto [0,1]; throws on constant input
ScaledOutcome scale_outcome(std::span<const double> y);

struct CleverCovariates {
  Eigen::VectorXd h1, h0;
};

// Standard form: H1 = A/g, H0 = (1-A)/(1-g). With an outcome-missingness
// model both are multiplied by I(M_Y=0)/P(M_Y=0|A,W); rows with the outcome
// missing get H = 0 and drop out of the fluctuation.
CleverCovariates clever_covariates(const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& g1_truncated,
                                   const Eigen::VectorXd* y_observed = nullptr,
                                   const Eigen::VectorXd* p_my_obs = nullptr);

struct FluctuationFit {
  double eps1 = 0.0;
  double eps0 = 0.0;
  bool converged = true;
  bool capped = false;
};

// logistic regression of y01 on (H1, H0) with offset logit(q01), no intercept
FluctuationFit fluctuate(const Eigen::VectorXd& q01, const Eigen::VectorXd& h1,
                         const Eigen::VectorXd& h0, const Eigen::VectorXd& y01);

struct FittedTmle {
  double ate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double eps1 = 0.0, eps0 = 0.0;
  bool fluct_converged = true;
  bool fluct_capped = false;
  double eic_mean = 0.0;
  std::vector<double> eic;
  // per-row targeted counterfactual predictions on the original scale
  std::vector<double> q1_star, q0_star;
  std::size_t n_used = 0;
  int g_truncation_count = 0;
  int my_truncation_count = 0;
  Eigen::VectorXd sl_weights_q, sl_weights_g, sl_weights_my;
};

// TMLE for the ATE of binary `a_col` on continuous `y_col`, adjusting for
// `w_cols`. Preconditions per flavor:
//   standard  - rows complete on (W, A, Y)
//   extended  - rows complete on (W, A); Y may carry mask
//   ext_mcmi  - like extended, with confounder missingness indicators already
//               appended to W and missing confounder cells set to reference
//               constants by the caller
FittedTmle estimate(const Dataset& d, Flavor flavor,
                    const std::vector<std::string>& w_cols, const std::string& a_col,
                    const std::string& y_col, RngStream& rng, const Options& opt = {},
                    const NuisanceOverrides* forced = nullptr);

}  // namespace mdt::tmle
