#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/rng.hpp"

namespace mdt::dgp {

// variable ids used in model term lists
inline constexpr int kB = 0;
inline constexpr int kW1 = 1, kW2 = 2, kW3 = 3, kW4 = 4, kW5 = 5, kW6 = 6;

std::string var_name(int id);

// which pieces a generating process has; fixed per process id
struct Structure {
  bool w3_categorical = false;  // four softmax levels driven by B
  bool w45_continuous = false;  // normal instead of binary
  bool has_w6 = false;          // gamma confounder
  bool copula = false;          // gaussian-copula dependence between W's
  std::vector<int> exposure_mains;             // var ids (W's and B)
  std::vector<std::vector<int>> exposure_inters;  // two-way pairs
  std::vector<int> outcome_mains;              // var ids (W's, A handled apart)
  std::vector<std::vector<int>> outcome_inters;   // two- to four-way sets
};

Structure structure(int dgp_id);

// numeric parameter bundle for one process; level-varying entries are
// indexed level-1
struct Params {
  int id = 1;
  // confounder marginal models
  double alpha0 = 0.0;              // W1 intercept
  double beta0 = 0.0, beta1 = 0.2;  // W2 on B
  double gamma0 = 0.0, gamma1 = 0.2;        // binary W3 on B
  std::array<double, 4> gamma0k{};          // categorical W3 intercepts
  std::array<double, 4> gamma1k{};          // categorical W3 slopes
  double delta0 = 0.0, delta1 = 0.2;        // W4 on B (logit scale or mean)
  double zeta0 = 0.0;                       // W5
  double xi0 = 2.0, xi1 = 0.2;              // W6 shape = xi0 + xi1 tB
  double tau0 = 1.0, tau1 = 0.2;            // W6 rate  = tau0 + tau1 tB
  std::vector<double> rho_flat;             // copula correlation, row-major

  // exposure model
  std::vector<double> eta_main_coefs;       // aligned with structure().exposure_mains
  std::vector<double> eta_inter_coefs;      // base (level-1 scale applies via multiplier)
  std::array<double, 3> eta0{};             // intercept per level
  std::array<double, 3> multiplier{1, 2, 4};  // interaction inflation per level

  // outcome model
  double ate = 0.2;                         // coefficient on A, the true ATE
  std::vector<double> ups_main_coefs;
  std::vector<double> ups_inter_coefs;
  std::array<double, 3> ups0{};             // intercept per level
  std::array<double, 3> outcome_scale{1, 1, 1};  // W-part scale per level
  double y_sd_target = 1.1;

  // centering constants for interaction products and standardization info
  std::map<int, double> center;
  std::map<int, double> spread;  // reference sd per variable (missingness models)

  Eigen::MatrixXd rho() const;
};

// spec = structure + params + positivity level
struct Spec {
  int id = 1;
  int level = 1;
  Params params;
};

struct CompleteData {
  Dataset data;
  double true_ate = 0.0;
};

// gaussian copula: each column marginally U(0,1), dependence from rho
Eigen::MatrixXd copula_sample(const Eigen::MatrixXd& rho, std::size_t n,
                              RngStream& rng);

CompleteData generate(const Spec& spec, std::size_t n, RngStream& rng);

double true_ate(const Spec& spec);

struct PositivityResult {
  double proportion = 0.0;
  bool refit_converged = true;
};

// refit the true-form exposure model on d and count rows with
// min(p, 1-p) below the threshold
PositivityResult quantify_positivity(const Dataset& d, const Spec& spec,
                                     double threshold = 0.002);

// Table-style calibration targets for one process
struct Targets {
  double exposure_prevalence = 0.15;
  double ate = 0.2;  // coefficient on A; 0.18..0.24 across processes
  std::array<double, 3> violation = {0.004, 0.10, 0.30};
  double w1_p = 0.21, w2_p = 0.13, w3_p = 0.59;
  std::array<double, 4> w3_cat{};   // categorical marginals
  double w4_p = 0.37;               // binary W4 (process 1)
  double w4_mean = 3.0;             // continuous W4
  double w5_p = 0.38;
  double w5_mean = 1.0;
  double y_sd = 1.1;
};

Targets default_targets(int dgp_id);

// Monte Carlo + quadrature calibration of every free intercept, the
// per-level interaction multipliers and the outcome scale; deterministic
// given the seed
Params calibrate(int dgp_id, const Targets& targets, std::uint64_t seed,
                 std::size_t n_panel = 200000);

}  // namespace mdt::dgp
