#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdt/rng.hpp"

namespace mdt {

// thrown when a strict fit meets a rank-deficient design
struct RankError : std::runtime_error {
  explicit RankError(std::vector<std::string> cols);
  std::vector<std::string> collinear;
};

enum class Family { gaussian, binomial, multinomial };

// what to do with near-collinear columns (R^2 against prior columns
// above 1 - 1e-10): strict fits throw, estimator-internal fits drop them
// and pin their coefficients at zero
enum class Collinear { error, drop };

struct GlmFit {
  Family family = Family::gaussian;
  Eigen::VectorXd beta;      // gaussian / binomial
  Eigen::MatrixXd beta_mat;  // multinomial, (k-1) x p, reference class 0
  int n_classes = 2;
  double sigma2 = 0.0;  // gaussian dispersion RSS/(n-p)
  bool converged = true;
  bool capped = false;  // separation guard clamped |beta|_inf at 30
  int iterations = 0;
  std::vector<std::string> dropped;  // rank-guard casualties (beta = 0)

  // retained for posterior draws and standard errors
  Eigen::MatrixXd xtx_chol_L;  // L with L L^T = X_kept^T W X_kept
  std::vector<Eigen::Index> kept;
  double rss = 0.0;
  Eigen::Index n = 0;

  Eigen::VectorXd predict_linear(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd predict_prob(const Eigen::MatrixXd& X) const;   // binomial
  Eigen::MatrixXd predict_classes(const Eigen::MatrixXd& X) const;  // n x k

  // large-sample covariance of beta (gaussian: sigma2 (X'X)^-1;
  // binomial: (X'WX)^-1), zero rows/cols for dropped coordinates
  Eigen::MatrixXd covariance() const;
};

inline constexpr double kBetaCap = 30.0;
inline constexpr double kRankTol = 1e-10;  // drop when 1 - R^2 < kRankTol

GlmFit fit_ols(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
               const Eigen::VectorXd& y, Collinear policy = Collinear::error);

GlmFit fit_logistic(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                    const Eigen::VectorXd& y, int max_iter = 100, double tol = 1e-8,
                    Collinear policy = Collinear::drop,
                    const Eigen::VectorXd* offset = nullptr);

GlmFit fit_multinomial(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                       const std::vector<int>& y, int n_classes, int max_iter = 100,
                       double tol = 1e-8, Collinear policy = Collinear::drop);

// sigma*^2 ~ scaled-inv-chi2, beta* ~ N(beta, sigma*^2 (X'X)^-1)
struct BayesLinearDraw {
  Eigen::VectorXd beta;
  double sigma2;
};
BayesLinearDraw draw_bayes_coefficients(const GlmFit& fit, RngStream& rng);

// X_new beta* + N(0, sigma*^2) noise per row
Eigen::VectorXd draw_bayes_linear(const GlmFit& fit, const Eigen::MatrixXd& X_new,
                                  RngStream& rng);

// non-negative least squares (Lawson-Hanson active set), weights normalized
// to sum 1; the all-zero solution falls back to uniform weights
Eigen::VectorXd nnls_weights(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

// rank screen used by all fits: returns kept column indices and the names of
// dropped (near-collinear) columns
std::pair<std::vector<Eigen::Index>, std::vector<std::string>> rank_screen(
    const Eigen::MatrixXd& X, const std::vector<std::string>& names);

}  // namespace mdt
