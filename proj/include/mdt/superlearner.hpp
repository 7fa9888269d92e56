#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/design.hpp"
#include "mdt/glm.hpp"
#include "mdt/rng.hpp"

namespace mdt {

// A regression problem phrased against a Dataset: response vector aligned
// with `rows`, covariates named (categoricals expand to dummies inside each
// learner's design).
struct SlProblem {
  const Dataset* data = nullptr;
  std::vector<std::string> covariates;
  std::vector<std::size_t> rows;
  Eigen::VectorXd y;
  Family family = Family::gaussian;
};

class BaseLearner {
 public:
  virtual ~BaseLearner() = default;
  virtual std::string name() const = 0;
  virtual void fit(const SlProblem& prob, const std::vector<std::size_t>& train_idx) = 0;
  virtual Eigen::VectorXd predict(const Dataset& d,
                                  std::span<const std::size_t> rows) const = 0;
};

struct LearnerSpec {
  std::string name;
  std::function<std::unique_ptr<BaseLearner>()> make;
};

// Base-learner library: main-effects GLM, two-way-interaction GLM, the
// marginal mean, and a fixed-knot piecewise-linear spline (hinges at the
// 25/50/75 percentiles of each continuous covariate).
struct LearnerLib {
  Family family = Family::gaussian;
  std::vector<LearnerSpec> learners;

  static LearnerLib standard(Family family);
  void validate() const;  // >= 2 learners, marginal mean present
};

struct SlFit {
  Family family = Family::gaussian;
  std::vector<std::string> learner_names;
  Eigen::VectorXd weights;   // simplex over learners (0 for failed ones)
  std::vector<double> cv_risk;  // +inf for failed learners
  std::vector<int> fold_of;     // per problem row
  Eigen::MatrixXd cv_pred;      // n x L honest cross-validated predictions
  std::vector<std::shared_ptr<const BaseLearner>> full_fits;  // null if failed
  std::vector<std::vector<std::shared_ptr<const BaseLearner>>> fold_fits;

  Eigen::VectorXd predict(const Dataset& d, std::span<const std::size_t> rows) const;
};

struct SlOptions {
  int folds = 10;
  int eg_iterations = 500;  // binomial simplex search
  double eg_tol = 1e-8;
};

// Cross-validated stacking: non-negative least squares weights for gaussian
// risk, exponentiated-gradient descent on the log-likelihood for binomial.
// A learner that throws on any fold gets infinite CV risk and weight zero;
// the mean learner cannot fail, so the ensemble always exists.
SlFit sl_fit(const SlProblem& prob, const LearnerLib& lib, RngStream& rng,
             const SlOptions& opt = {});

}  // namespace mdt
