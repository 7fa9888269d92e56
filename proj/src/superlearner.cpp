#include "mdt/superlearner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mdt/stats.hpp"

namespace mdt {

namespace {

constexpr double kProbEps = 1e-6;

double clamp01(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

class MeanLearner final : public BaseLearner {
 public:
  std::string name() const override { return "mean"; }
  void fit(const SlProblem& prob, const std::vector<std::size_t>& idx) override {
    double s = 0.0;
    for (std::size_t i : idx) s += prob.y[static_cast<Eigen::Index>(i)];
    mean_ = idx.empty() ? 0.0 : s / static_cast<double>(idx.size());
  }
  Eigen::VectorXd predict(const Dataset&, std::span<const std::size_t> rows) const override {
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows.size()), mean_);
  }

 private:
  double mean_ = 0.0;
};

class GlmLearner : public BaseLearner {
 public:
  explicit GlmLearner(bool interactions) : interactions_(interactions) {}
  std::string name() const override {
    return interactions_ ? "glm-two-way" : "glm-main";
  }
  void fit(const SlProblem& prob, const std::vector<std::size_t>& idx) override {
    builder_ = DesignBuilder();
    builder_.intercept();
    for (const auto& c : prob.covariates) builder_.add(c);
    if (interactions_)
      for (std::size_t a = 0; a + 1 < prob.covariates.size(); ++a)
        for (std::size_t b = a + 1; b < prob.covariates.size(); ++b)
          builder_.add_interaction({prob.covariates[a], prob.covariates[b]});
    std::vector<std::size_t> rows;
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    rows.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      rows.push_back(prob.rows[idx[k]]);
      y[static_cast<Eigen::Index>(k)] = prob.y[static_cast<Eigen::Index>(idx[k])];
    }
    const DesignMatrix dm = builder_.build(*prob.data, rows);
    family_ = prob.family;
    if (family_ == Family::gaussian) {
      if (dm.X.rows() <= static_cast<Eigen::Index>(rank_screen(dm.X, dm.names).first.size()))
        throw std::runtime_error(name() + ": n <= p");
      fit_ = fit_ols(dm.X, dm.names, y, Collinear::drop);
    } else {
      fit_ = fit_logistic(dm.X, dm.names, y, 60, 1e-8, Collinear::drop);
    }
  }
  Eigen::VectorXd predict(const Dataset& d, std::span<const std::size_t> rows) const override {
    const DesignMatrix dm = builder_.build(d, rows);
    if (family_ == Family::gaussian) return fit_.predict_linear(dm.X);
    return fit_.predict_prob(dm.X);
  }

 private:
  bool interactions_;
  DesignBuilder builder_;
  GlmFit fit_;
  Family family_ = Family::gaussian;
};

class SplineLearner final : public BaseLearner {
 public:
  std::string name() const override { return "spline"; }
  void fit(const SlProblem& prob, const std::vector<std::size_t>& idx) override {
    builder_ = DesignBuilder();
    builder_.intercept();
    for (const auto& cname : prob.covariates) {
      builder_.add(cname);
      const Column& c = prob.data->col(cname);
      if (!c.kind.is_numeric()) continue;
      std::vector<double> vals;
      vals.reserve(idx.size());
      for (std::size_t i : idx) vals.push_back(c.values[prob.rows[i]]);
      for (double q : {0.25, 0.5, 0.75}) {
        const double knot = quantile(vals, q);
        builder_.add_hinge(cname, knot);
      }
    }
    std::vector<std::size_t> rows;
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      rows.push_back(prob.rows[idx[k]]);
      y[static_cast<Eigen::Index>(k)] = prob.y[static_cast<Eigen::Index>(idx[k])];
    }
    const DesignMatrix dm = builder_.build(*prob.data, rows);
    family_ = prob.family;
    if (family_ == Family::gaussian)
      fit_ = fit_ols(dm.X, dm.names, y, Collinear::drop);
    else
      fit_ = fit_logistic(dm.X, dm.names, y, 60, 1e-8, Collinear::drop);
  }
  Eigen::VectorXd predict(const Dataset& d, std::span<const std::size_t> rows) const override {
    const DesignMatrix dm = builder_.build(d, rows);
    if (family_ == Family::gaussian) return fit_.predict_linear(dm.X);
    return fit_.predict_prob(dm.X);
  }

 private:
  DesignBuilder builder_;
  GlmFit fit_;
  Family family_ = Family::gaussian;
};

std::vector<int> assign_folds(const SlProblem& prob, int folds, RngStream& rng) {
  const std::size_t n = prob.rows.size();
  std::vector<int> fold_of(n, 0);
  auto shuffled = [&](std::vector<std::size_t> v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[rng.uniform_int(i)]);
    return v;
  };
  if (prob.family == Family::binomial) {
    // stratify on y so every fold sees both classes
    std::vector<std::size_t> ones, zeros;
    for (std::size_t i = 0; i < n; ++i)
      (prob.y[static_cast<Eigen::Index>(i)] > 0.5 ? ones : zeros).push_back(i);
    int f = 0;
    for (std::size_t i : shuffled(std::move(ones))) fold_of[i] = f++ % folds;
    for (std::size_t i : shuffled(std::move(zeros))) fold_of[i] = f++ % folds;
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    int f = 0;
    for (std::size_t i : shuffled(std::move(all))) fold_of[i] = f++ % folds;
  }
  return fold_of;
}

double gaussian_risk(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

double binomial_risk(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = clamp01(pred[i]);
    nll -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return nll / static_cast<double>(y.size());
}

// exponentiated-gradient descent over the probability simplex for the
// binomial ensemble weights
Eigen::VectorXd eg_weights(const Eigen::MatrixXd& preds, const Eigen::VectorXd& y,
                           const std::vector<bool>& ok, const SlOptions& opt) {
  const Eigen::Index L = preds.cols();
  const Eigen::Index n = preds.rows();
  std::vector<Eigen::Index> act;
  for (Eigen::Index l = 0; l < L; ++l)
    if (ok[static_cast<std::size_t>(l)]) act.push_back(l);

  auto objective = [&](const Eigen::VectorXd& wc) {
    return binomial_risk(preds * wc, y);
  };

  // warm start at the best vertex so the descent can only improve on every
  // single learner
  Eigen::VectorXd w = Eigen::VectorXd::Zero(L);
  {
    Eigen::Index best = act.front();
    double best_risk = std::numeric_limits<double>::infinity();
    for (Eigen::Index l : act) {
      const double r = binomial_risk(preds.col(l), y);
      if (r < best_risk) {
        best_risk = r;
        best = l;
      }
    }
    for (Eigen::Index l : act) w[l] = 1e-6;
    w[best] = 1.0;
    w /= w.sum();
  }

  double eta = 1.0;
  double obj = objective(w);
  for (int it = 0; it < opt.eg_iterations; ++it) {
    const Eigen::VectorXd pbar = preds * w;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(L);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = clamp01(pbar[i]);
      const double gi = (p - y[i]) / (p * (1.0 - p));
      for (Eigen::Index l : act) grad[l] += gi * preds(i, l);
    }
    grad /= static_cast<double>(n);

    bool moved = false;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd trial = Eigen::VectorXd::Zero(L);
      double z = 0.0;
      for (Eigen::Index l : act) {
        trial[l] = w[l] * std::exp(-eta * grad[l]);
        z += trial[l];
      }
      for (Eigen::Index l : act) trial[l] /= z;
      const double trial_obj = objective(trial);
      if (trial_obj <= obj + 1e-14) {
        const double delta = (trial - w).lpNorm<Eigen::Infinity>();
        w = trial;
        obj = trial_obj;
        moved = delta > opt.eg_tol;
        eta = std::min(eta * 1.5, 8.0);  // recover after backtracking
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;
  }
  return w;
}

}  // namespace

LearnerLib LearnerLib::standard(Family family) {
  LearnerLib lib;
  lib.family = family;
  lib.learners = {
      {"glm-main", [] { return std::make_unique<GlmLearner>(false); }},
      {"glm-two-way", [] { return std::make_unique<GlmLearner>(true); }},
      {"mean", [] { return std::make_unique<MeanLearner>(); }},
      {"spline", [] { return std::make_unique<SplineLearner>(); }},
  };
  return lib;
}

void LearnerLib::validate() const {
  if (learners.size() < 2)
    throw std::invalid_argument("learner library needs >= 2 learners");
  const bool has_mean = std::any_of(learners.begin(), learners.end(),
                                    [](const LearnerSpec& s) { return s.name == "mean"; });
  if (!has_mean)
    throw std::invalid_argument("learner library must include the mean learner");
}

Eigen::VectorXd SlFit::predict(const Dataset& d,
                               std::span<const std::size_t> rows) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t l = 0; l < full_fits.size(); ++l) {
    if (weights[static_cast<Eigen::Index>(l)] <= 0.0 || !full_fits[l]) continue;
    out += weights[static_cast<Eigen::Index>(l)] * full_fits[l]->predict(d, rows);
  }
  if (family == Family::binomial)
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = clamp01(out[i]);
  return out;
}

SlFit sl_fit(const SlProblem& prob, const LearnerLib& lib, RngStream& rng,
             const SlOptions& opt) {
  lib.validate();
  const std::size_t n = prob.rows.size();
  if (static_cast<Eigen::Index>(n) != prob.y.size())
    throw std::invalid_argument("sl_fit: rows/y mismatch");
  if (n < 2 * static_cast<std::size_t>(opt.folds))
    throw std::invalid_argument("sl_fit: n < 2 * folds");
  const std::size_t L = lib.learners.size();

  SlFit out;
  out.family = prob.family;
  out.fold_of = assign_folds(prob, opt.folds, rng);
  out.cv_pred = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(L));
  out.cv_risk.assign(L, 0.0);
  out.fold_fits.resize(static_cast<std::size_t>(opt.folds));
  std::vector<bool> ok(L, true);

  for (int f = 0; f < opt.folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i)
      (out.fold_of[i] == f ? test : train).push_back(i);
    out.fold_fits[static_cast<std::size_t>(f)].resize(L);
    std::vector<std::size_t> test_rows;
    for (std::size_t i : test) test_rows.push_back(prob.rows[i]);
    for (std::size_t l = 0; l < L; ++l) {
      if (!ok[l]) continue;
      try {
        auto learner = lib.learners[l].make();
        learner->fit(prob, train);
        const Eigen::VectorXd pred = learner->predict(*prob.data, test_rows);
        for (std::size_t k = 0; k < test.size(); ++k)
          out.cv_pred(static_cast<Eigen::Index>(test[k]), static_cast<Eigen::Index>(l)) =
              pred[static_cast<Eigen::Index>(k)];
        out.fold_fits[static_cast<std::size_t>(f)][l] = std::move(learner);
      } catch (const std::exception&) {
        ok[l] = false;
      }
    }
  }

  out.learner_names.reserve(L);
  for (const auto& s : lib.learners) out.learner_names.push_back(s.name);
  for (std::size_t l = 0; l < L; ++l) {
    if (!ok[l]) {
      out.cv_risk[l] = std::numeric_limits<double>::infinity();
      continue;
    }
    const Eigen::VectorXd pred = out.cv_pred.col(static_cast<Eigen::Index>(l));
    out.cv_risk[l] = prob.family == Family::gaussian ? gaussian_risk(pred, prob.y)
                                                     : binomial_risk(pred, prob.y);
  }

  // ensemble weights over the non-failed learners
  std::vector<Eigen::Index> act;
  for (std::size_t l = 0; l < L; ++l)
    if (ok[l]) act.push_back(static_cast<Eigen::Index>(l));
  out.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L));
  if (prob.family == Family::gaussian) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(act.size()));
    for (std::size_t j = 0; j < act.size(); ++j) A.col(static_cast<Eigen::Index>(j)) = out.cv_pred.col(act[j]);
    const Eigen::VectorXd w = nnls_weights(A, prob.y);
    for (std::size_t j = 0; j < act.size(); ++j) out.weights[act[j]] = w[static_cast<Eigen::Index>(j)];
  } else {
    out.weights = eg_weights(out.cv_pred, prob.y, ok, opt);
  }

  // full-data fits for every healthy learner (weight-zero ones are cheap and
  // useful for diagnostics)
  out.full_fits.resize(L);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t l = 0; l < L; ++l) {
    if (!ok[l]) continue;
    try {
      auto learner = lib.learners[l].make();
      learner->fit(prob, all);
      out.full_fits[l] = std::move(learner);
    } catch (const std::exception&) {
      out.weights[static_cast<Eigen::Index>(l)] = 0.0;
    }
  }
  const double total = out.weights.sum();
  if (total <= 0.0) {
    // everything failed except possibly the mean; fall back to it
    for (std::size_t l = 0; l < L; ++l)
      if (lib.learners[l].name == "mean") {
        auto learner = lib.learners[l].make();
        learner->fit(prob, all);
        out.full_fits[l] = std::move(learner);
        out.weights[static_cast<Eigen::Index>(l)] = 1.0;
      }
  } else {
    out.weights /= total;
  }
  return out;
}

}  // namespace mdt
