#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "mdt/design.hpp"
#include "mdt/glm.hpp"
#include "mdt/rng.hpp"
#include "mdt/special.hpp"

using namespace mdt;

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), X.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(X.cols()) = X;
  return out;
}

std::vector<std::string> names_n(std::size_t p) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < p; ++i) out.push_back("x" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("ols recovers an exact linear relationship") {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0, 0, 1, 1, 1, 2, 1, 1, 3, 2, 2;
  Eigen::VectorXd y = X * Eigen::Vector2d(1.0, 2.0);
  const GlmFit fit = fit_ols(X, names_n(2), y);
  CHECK(fit.beta[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.beta[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.sigma2 == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("intercept-only ols returns the mean") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 1);
  Eigen::VectorXd y(5);
  y << 1, 2, 3, 4, 10;
  const GlmFit fit = fit_ols(X, {"(Intercept)"}, y);
  CHECK(fit.beta[0] == doctest::Approx(4.0));
}

TEST_CASE("ols matches a pseudo-inverse oracle on a random problem") {
  RngStream rng(11, 0, "ols");
  Eigen::MatrixXd X(50, 3);
  Eigen::VectorXd y(50);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
    y[i] = 0.5 * X(i, 0) - 1.2 * X(i, 2) + rng.normal();
  }
  const GlmFit fit = fit_ols(X, names_n(3), y);
  // independent oracle: SVD pseudo-inverse solution of the normal equations
  const Eigen::VectorXd oracle =
      X.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
  for (int j = 0; j < 3; ++j)
    CHECK(fit.beta[j] == doctest::Approx(oracle[j]).epsilon(1e-8));
}

TEST_CASE("rank-deficient strict ols names the collinear column") {
  Eigen::MatrixXd X(10, 3);
  RngStream rng(12, 0, "rank");
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    X(i, 2) = 2.0 * X(i, 0) - X(i, 1);
  }
  Eigen::VectorXd y = X.col(0);
  try {
    fit_ols(X, {"a", "b", "dup"}, y, Collinear::error);
    FAIL("expected RankError");
  } catch (const RankError& e) {
    REQUIRE(e.collinear.size() == 1);
    CHECK(e.collinear[0] == "dup");
  }
  // drop policy fits with the offender pinned at zero
  const GlmFit fit = fit_ols(X, {"a", "b", "dup"}, y, Collinear::drop);
  CHECK(fit.beta[2] == 0.0);
  CHECK(fit.dropped == std::vector<std::string>{"dup"});
}

TEST_CASE("logistic degenerate all-zero outcome is capped, never throws") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(40, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(40);
  const GlmFit fit = fit_logistic(X, {"(Intercept)"}, y);
  CHECK_FALSE(fit.converged);
  CHECK(fit.capped);
  CHECK(fit.beta[0] == doctest::Approx(-kBetaCap));
  const Eigen::VectorXd p = fit.predict_prob(X);
  for (int i = 0; i < 40; ++i) CHECK(p[i] <= 0.01);
}

TEST_CASE("logistic balanced intercept-only gives beta0 near zero") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(100, 1);
  Eigen::VectorXd y(100);
  for (int i = 0; i < 100; ++i) y[i] = i < 50 ? 0.0 : 1.0;
  const GlmFit fit = fit_logistic(X, {"(Intercept)"}, y);
  CHECK(fit.converged);
  CHECK(fit.beta[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
}

TEST_CASE("logistic simulate-and-refit recovers the truth") {
  RngStream rng(13, 0, "logit");
  const int n = 5000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  const double b0 = 0.4, b1 = -0.6;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    y[i] = rng.bernoulli(expit(b0 + b1 * X(i, 1))) ? 1.0 : 0.0;
  }
  const GlmFit fit = fit_logistic(X, names_n(2), y);
  REQUIRE(fit.converged);
  const Eigen::MatrixXd cov = fit.covariance();
  CHECK(std::fabs(fit.beta[0] - b0) < 3.0 * std::sqrt(cov(0, 0)));
  CHECK(std::fabs(fit.beta[1] - b1) < 3.0 * std::sqrt(cov(1, 1)));
  // converged fits solve the score equation
  const Eigen::VectorXd p = fit.predict_prob(X);
  const Eigen::VectorXd score = X.transpose() * (y - p);
  CHECK(score.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("multinomial with k=2 reduces to logistic") {
  RngStream rng(14, 0, "multi2");
  const int n = 800;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd yb(n);
  std::vector<int> yc(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    const bool one = rng.bernoulli(expit(-0.3 + 0.8 * X(i, 1)));
    yb[i] = one ? 1.0 : 0.0;
    yc[i] = one ? 1 : 0;
  }
  const GlmFit lg = fit_logistic(X, names_n(2), yb);
  const GlmFit mn = fit_multinomial(X, names_n(2), yc, 2);
  REQUIRE(mn.converged);
  CHECK(mn.beta_mat(0, 0) == doctest::Approx(lg.beta[0]).epsilon(1e-5));
  CHECK(mn.beta_mat(0, 1) == doctest::Approx(lg.beta[1]).epsilon(1e-5));
  const Eigen::MatrixXd P = mn.predict_classes(X);
  const Eigen::VectorXd pl = lg.predict_prob(X);
  for (int i = 0; i < n; ++i) {
    CHECK(P(i, 1) == doctest::Approx(pl[i]).epsilon(1e-6));
    CHECK(P.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("multinomial intercept-only matches empirical frequencies") {
  std::vector<int> y;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < (c + 1) * 10; ++i) y.push_back(c);
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(y.size()), 1);
  const GlmFit fit = fit_multinomial(X, {"(Intercept)"}, y, 3);
  const Eigen::MatrixXd P = fit.predict_classes(X.topRows(1));
  CHECK(P(0, 0) == doctest::Approx(10.0 / 60.0).epsilon(1e-5));
  CHECK(P(0, 1) == doctest::Approx(20.0 / 60.0).epsilon(1e-5));
  CHECK(P(0, 2) == doctest::Approx(30.0 / 60.0).epsilon(1e-5));
}

TEST_CASE("multinomial simulate-and-refit recovers the softmax coefficients") {
  RngStream rng(15, 0, "multi4");
  const int n = 6000, k = 4;
  const double g0[k] = {0.0, 0.4, -0.2, -0.8};
  const double g1[k] = {0.0, 0.5, -0.4, 0.3};
  Eigen::MatrixXd X(n, 2);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    double w[k], z = 0.0;
    for (int c = 0; c < k; ++c) {
      w[c] = std::exp(g0[c] + g1[c] * X(i, 1));
      z += w[c];
    }
    double u = rng.uniform() * z;
    int c = 0;
    while (c < k - 1 && u > w[c]) {
      u -= w[c];
      ++c;
    }
    y[i] = c;
  }
  const GlmFit fit = fit_multinomial(X, names_n(2), y, k);
  REQUIRE(fit.converged);
  // MC standard errors are ~0.05 here; use a generous 3-SE style band
  for (int c = 1; c < k; ++c) {
    CHECK(std::fabs(fit.beta_mat(c - 1, 0) - g0[c]) < 0.15);
    CHECK(std::fabs(fit.beta_mat(c - 1, 1) - g1[c]) < 0.15);
  }
}

TEST_CASE("bayes linear draws") {
  RngStream rng(16, 0, "bayes");
  Eigen::MatrixXd X(30, 2);
  for (int i = 0; i < 30; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
  }

  SUBCASE("sigma2 = 0 makes draws deterministic") {
    const Eigen::VectorXd y = X * Eigen::Vector2d(2.0, -1.0);
    const GlmFit fit = fit_ols(X, names_n(2), y);
    const Eigen::VectorXd d1 = draw_bayes_linear(fit, X, rng);
    for (int i = 0; i < 30; ++i) CHECK(d1[i] == doctest::Approx(y[i]).epsilon(1e-9));
  }

  SUBCASE("draw mean tracks the point prediction") {
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) y[i] = 1.0 + 0.5 * X(i, 1) + rng.normal();
    const GlmFit fit = fit_ols(X, names_n(2), y);
    Eigen::MatrixXd xnew(1, 2);
    xnew << 1.0, 0.7;
    const double point = fit.predict_linear(xnew)[0];
    double acc = 0.0, acc2 = 0.0;
    const int m = 10000;
    for (int r = 0; r < m; ++r) {
      const double v = draw_bayes_linear(fit, xnew, rng)[0];
      acc += v;
      acc2 += v * v;
    }
    const double mean = acc / m;
    const double se = std::sqrt((acc2 / m - mean * mean) / m);
    CHECK(std::fabs(mean - point) < 3.0 * se);
  }

  SUBCASE("draw spread grows with sigma2") {
    Eigen::VectorXd y1(30), y2(30);
    for (int i = 0; i < 30; ++i) {
      const double f = 1.0 + 0.5 * X(i, 1);
      y1[i] = f + 0.1 * rng.normal();
      y2[i] = f + 2.0 * rng.normal();
    }
    const GlmFit f1 = fit_ols(X, names_n(2), y1);
    const GlmFit f2 = fit_ols(X, names_n(2), y2);
    auto spread = [&](const GlmFit& f) {
      double a = 0, a2 = 0;
      for (int r = 0; r < 2000; ++r) {
        const double v = draw_bayes_linear(f, X.topRows(1), rng)[0];
        a += v;
        a2 += v * v;
      }
      return a2 / 2000 - (a / 2000) * (a / 2000);
    };
    CHECK(spread(f1) < spread(f2));
  }
}

TEST_CASE("nnls puts weight 1 on an exactly matching column") {
  RngStream rng(17, 0, "nnls");
  Eigen::MatrixXd A(40, 3);
  Eigen::VectorXd b(40);
  for (int i = 0; i < 40; ++i) {
    b[i] = rng.normal();
    A(i, 0) = rng.normal();
    A(i, 1) = b[i];
    A(i, 2) = rng.normal();
  }
  const Eigen::VectorXd w = nnls_weights(A, b);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("nnls tie case still yields a simplex vector") {
  Eigen::MatrixXd A(10, 2);
  Eigen::VectorXd b(10);
  for (int i = 0; i < 10; ++i) {
    b[i] = std::sin(i * 0.7);
    A(i, 0) = b[i];
    A(i, 1) = b[i];
  }
  const Eigen::VectorXd w = nnls_weights(A, b);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(w.minCoeff() >= 0.0);
}

TEST_CASE("nnls beats every coarse simplex grid point") {
  RngStream rng(18, 0, "nnlsgrid");
  Eigen::MatrixXd A(60, 3);
  Eigen::VectorXd b(60);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 3; ++j) A(i, j) = rng.normal();
    b[i] = 0.3 * A(i, 0) + 0.7 * A(i, 2) + 0.3 * rng.normal();
  }
  const Eigen::VectorXd w = nnls_weights(A, b);
  // the returned normalized weights are compared against the best *normalized*
  // grid point, i.e. oracle over the simplex at step 0.01
  const double obj = (A * w - b).squaredNorm();
  double best = 1e300;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; i + j <= 100; ++j) {
      const Eigen::Vector3d g(i / 100.0, j / 100.0, (100 - i - j) / 100.0);
      best = std::min(best, (A * g - b).squaredNorm());
    }
  // nnls solves the unconstrained-scale problem; after normalization it may
  // sit within one grid step of the simplex optimum
  CHECK(obj <= best + 1e-6 + 0.01 * b.squaredNorm() * 0.01);
}

TEST_CASE("design builder expands interactions deterministically") {
  Dataset d(3);
  d.add_column({"Wa", VarKind::continuous(), {1.0, 2.0, 3.0}, {0, 0, 0}});
  d.add_column({"Wb", VarKind::continuous(), {4.0, 5.0, 6.0}, {0, 0, 0}});
  const DesignMatrix m =
      DesignBuilder().intercept().add("Wa").add("Wb").add_interaction({"Wa", "Wb"}).build(d);
  REQUIRE(m.names.size() == 4);
  CHECK(m.names[3] == "Wa:Wb");
  for (int i = 0; i < 3; ++i) CHECK(m.X(i, 3) == m.X(i, 1) * m.X(i, 2));
}

TEST_CASE("design builder one-hot blocks drop the reference level") {
  Dataset d(4);
  d.add_column({"c", VarKind::categorical({"a", "b", "c"}), {0, 1, 2, 1}, {0, 0, 0, 0}});
  const DesignMatrix m = DesignBuilder().intercept().add("c").build(d);
  REQUIRE(m.names.size() == 3);
  CHECK(m.names[1] == "c=b");
  CHECK(m.names[2] == "c=c");
  for (int i = 0; i < 4; ++i) CHECK(m.X(i, 1) + m.X(i, 2) <= 1.0);
}
