#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mdt/rng.hpp"
#include "mdt/special.hpp"
#include "mdt/superlearner.hpp"

using namespace mdt;

namespace {

Dataset linear_data(std::size_t n, RngStream& rng, Eigen::VectorXd* y_out,
                    bool binary_response = false, bool interaction_truth = false) {
  Dataset d(n);
  std::vector<double> x1(n), x2(n), x3(n);
  std::vector<std::uint8_t> obs(n, 0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.normal();
    x3[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    double f = interaction_truth ? 1.6 * x1[i] * x3[i] - 0.8 * x2[i] * x3[i]
                                 : 1.0 + 0.8 * x1[i] - 0.5 * x2[i] + 0.7 * x3[i];
    if (binary_response)
      y[static_cast<Eigen::Index>(i)] = rng.bernoulli(expit(f)) ? 1.0 : 0.0;
    else
      y[static_cast<Eigen::Index>(i)] = f;
  }
  d.add_column({"x1", VarKind::continuous(), std::move(x1), obs});
  d.add_column({"x2", VarKind::continuous(), std::move(x2), obs});
  d.add_column({"x3", VarKind::binary(), std::move(x3), obs});
  *y_out = y;
  return d;
}

SlProblem problem_for(const Dataset& d, const Eigen::VectorXd& y, Family fam) {
  SlProblem p;
  p.data = &d;
  p.covariates = {"x1", "x2", "x3"};
  p.rows.resize(d.n_rows());
  std::iota(p.rows.begin(), p.rows.end(), 0);
  p.y = y;
  p.family = fam;
  return p;
}

}  // namespace

TEST_CASE("exact linear truth concentrates weight on the glm learner") {
  RngStream rng(21, 0, "sl");
  Eigen::VectorXd y;
  const Dataset d = linear_data(400, rng, &y);
  const SlFit fit = sl_fit(problem_for(d, y, Family::gaussian),
                           LearnerLib::standard(Family::gaussian), rng);
  double glmish = 0.0;
  for (std::size_t l = 0; l < fit.learner_names.size(); ++l)
    if (fit.learner_names[l] != "mean")
      glmish += fit.weights[static_cast<Eigen::Index>(l)];
  CHECK(glmish >= 0.99);
}

TEST_CASE("pure-noise response keeps the ensemble near the mean learner") {
  RngStream rng(22, 0, "slnoise");
  Eigen::VectorXd y(500);
  Dataset dummy;
  const Dataset d = linear_data(500, rng, &y);
  for (int i = 0; i < 500; ++i) y[i] = rng.normal();
  const SlProblem prob = problem_for(d, y, Family::gaussian);
  const SlFit fit = sl_fit(prob, LearnerLib::standard(Family::gaussian), rng);
  double mean_risk = 0.0, ens_risk = 0.0;
  for (std::size_t l = 0; l < fit.learner_names.size(); ++l)
    if (fit.learner_names[l] == "mean") mean_risk = fit.cv_risk[l];
  const Eigen::VectorXd ens = fit.cv_pred * fit.weights;
  ens_risk = (ens - y).squaredNorm() / 500.0;
  CHECK(ens_risk <= 1.02 * mean_risk);
}

TEST_CASE("interaction truth favors the two-way learner across seeds") {
  int wins = 0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    RngStream rng(3000 + s, 0, "slint");
    Eigen::VectorXd y;
    const Dataset d = linear_data(4000, rng, &y, true, true);
    const SlFit fit = sl_fit(problem_for(d, y, Family::binomial),
                             LearnerLib::standard(Family::binomial), rng);
    double main_risk = 0, int_risk = 0;
    for (std::size_t l = 0; l < fit.learner_names.size(); ++l) {
      if (fit.learner_names[l] == "glm-main") main_risk = fit.cv_risk[l];
      if (fit.learner_names[l] == "glm-two-way") int_risk = fit.cv_risk[l];
    }
    if (int_risk < main_risk) ++wins;
  }
  CHECK(wins >= 45);
}

TEST_CASE("prediction is the weighted combination of base predictions") {
  RngStream rng(23, 0, "slpred");
  Eigen::VectorXd y;
  const Dataset d = linear_data(300, rng, &y);
  SlFit fit = sl_fit(problem_for(d, y, Family::gaussian),
                     LearnerLib::standard(Family::gaussian), rng);
  std::vector<std::size_t> rows(30);
  std::iota(rows.begin(), rows.end(), 0);

  SUBCASE("degenerate weight vector selects one learner") {
    for (std::size_t l = 0; l < fit.learner_names.size(); ++l)
      fit.weights[static_cast<Eigen::Index>(l)] = fit.full_fits[l] ? 1.0 : 0.0;
    double total = fit.weights.sum();
    fit.weights /= total;
    // force everything onto the first fitted learner
    bool first = true;
    for (std::size_t l = 0; l < fit.learner_names.size(); ++l) {
      if (fit.full_fits[l] && first) {
        fit.weights[static_cast<Eigen::Index>(l)] = 1.0;
        first = false;
      } else {
        fit.weights[static_cast<Eigen::Index>(l)] = 0.0;
      }
    }
    const Eigen::VectorXd p = fit.predict(d, rows);
    for (std::size_t l = 0; l < fit.learner_names.size(); ++l)
      if (fit.weights[static_cast<Eigen::Index>(l)] == 1.0) {
        const Eigen::VectorXd q = fit.full_fits[l]->predict(d, rows);
        for (std::size_t i = 0; i < rows.size(); ++i)
          CHECK(p[static_cast<Eigen::Index>(i)] ==
                doctest::Approx(q[static_cast<Eigen::Index>(i)]));
      }
  }

  SUBCASE("0.3 / 0.7 mix matches hand arithmetic") {
    // pick two fitted learners
    std::vector<std::size_t> fitted;
    for (std::size_t l = 0; l < fit.learner_names.size(); ++l)
      if (fit.full_fits[l]) fitted.push_back(l);
    REQUIRE(fitted.size() >= 2);
    fit.weights.setZero();
    fit.weights[static_cast<Eigen::Index>(fitted[0])] = 0.3;
    fit.weights[static_cast<Eigen::Index>(fitted[1])] = 0.7;
    const Eigen::VectorXd p = fit.predict(d, rows);
    const Eigen::VectorXd p0 = fit.full_fits[fitted[0]]->predict(d, rows);
    const Eigen::VectorXd p1 = fit.full_fits[fitted[1]]->predict(d, rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      CHECK(p[ii] == doctest::Approx(0.3 * p0[ii] + 0.7 * p1[ii]).epsilon(1e-12));
    }
  }
}

TEST_CASE("cross-validation is honest: held-out prediction ignores own fold") {
  RngStream rng(24, 0, "slcv");
  Eigen::VectorXd y;
  const Dataset d = linear_data(200, rng, &y);
  const SlProblem prob = problem_for(d, y, Family::gaussian);
  const SlFit fit = sl_fit(prob, LearnerLib::standard(Family::gaussian), rng);
  // recompute every cv prediction from the stored per-fold fits and compare
  for (std::size_t i = 0; i < prob.rows.size(); ++i) {
    const int f = fit.fold_of[i];
    const std::vector<std::size_t> row = {prob.rows[i]};
    for (std::size_t l = 0; l < fit.learner_names.size(); ++l) {
      if (!fit.fold_fits[static_cast<std::size_t>(f)][l]) continue;
      const double pred =
          fit.fold_fits[static_cast<std::size_t>(f)][l]->predict(d, row)[0];
      CHECK(fit.cv_pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) ==
            doctest::Approx(pred).epsilon(1e-12));
    }
  }
  // folds partition rows
  std::vector<int> counts(10, 0);
  for (int f : fit.fold_of) counts[static_cast<std::size_t>(f)]++;
  for (int c : counts) CHECK(c == 20);
}

TEST_CASE("ensemble cv risk does not exceed any single-learner vertex") {
  RngStream rng(25, 0, "slvertex");
  Eigen::VectorXd y;
  const Dataset d = linear_data(600, rng, &y, true);
  const SlProblem prob = problem_for(d, y, Family::binomial);
  const SlFit fit = sl_fit(prob, LearnerLib::standard(Family::binomial), rng);
  auto nll = [&](const Eigen::VectorXd& p) {
    double s = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double pc = std::clamp(p[i], 1e-6, 1.0 - 1e-6);
      s -= y[i] * std::log(pc) + (1 - y[i]) * std::log(1 - pc);
    }
    return s / static_cast<double>(p.size());
  };
  const double ens = nll(fit.cv_pred * fit.weights);
  for (std::size_t l = 0; l < fit.learner_names.size(); ++l) {
    if (!std::isfinite(fit.cv_risk[l])) continue;
    CHECK(ens <= fit.cv_risk[l] + 1e-9);
  }
}

TEST_CASE("a learner that throws is excluded, the ensemble survives") {
  RngStream rng(26, 0, "slfail");
  Eigen::VectorXd y;
  const Dataset d = linear_data(200, rng, &y);

  struct ThrowingLearner final : BaseLearner {
    std::string name() const override { return "throwing"; }
    void fit(const SlProblem&, const std::vector<std::size_t>&) override {
      throw std::runtime_error("deliberate failure");
    }
    Eigen::VectorXd predict(const Dataset&, std::span<const std::size_t>) const override {
      return {};
    }
  };

  LearnerLib lib = LearnerLib::standard(Family::gaussian);
  lib.learners.push_back({"throwing", [] { return std::make_unique<ThrowingLearner>(); }});
  const SlFit fit = sl_fit(problem_for(d, y, Family::gaussian), lib, rng);
  for (std::size_t l = 0; l < fit.learner_names.size(); ++l)
    if (fit.learner_names[l] == "throwing") {
      CHECK(std::isinf(fit.cv_risk[l]));
      CHECK(fit.weights[static_cast<Eigen::Index>(l)] == 0.0);
    }
  CHECK(fit.weights.sum() == doctest::Approx(1.0));
}

TEST_CASE("library invariants are enforced") {
  LearnerLib lib = LearnerLib::standard(Family::gaussian);
  lib.learners.erase(lib.learners.begin() + 2);  // drop the mean learner
  RngStream rng(27, 0, "sllib");
  Eigen::VectorXd y;
  const Dataset d = linear_data(100, rng, &y);
  CHECK_THROWS_AS(sl_fit(problem_for(d, y, Family::gaussian), lib, rng),
                  std::invalid_argument);
}
