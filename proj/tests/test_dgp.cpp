#include <doctest.h>

#include <cmath>
#include <map>

#include "mdt/dgp.hpp"
#include "mdt/glm.hpp"
#include "mdt/rng.hpp"
#include "mdt/special.hpp"
#include "mdt/stats.hpp"

using namespace mdt;

namespace {

// unit tests calibrate on demand and share the result across cases
const dgp::Params& cached_params(int id) {
  static std::map<int, dgp::Params> cache;
  auto it = cache.find(id);
  if (it == cache.end())
    it = cache.emplace(id, dgp::calibrate(id, dgp::default_targets(id), 20240815))
             .first;
  return it->second;
}

}  // namespace

TEST_CASE("copula sample columns are uniform and honor the correlation") {
  RngStream rng(41, 0, "copula");

  SUBCASE("identity correlation gives independent uniforms") {
    const Eigen::MatrixXd id3 = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd U = dgp::copula_sample(id3, 20000, rng);
    for (int j = 0; j < 3; ++j) {
      std::vector<double> col(20000);
      for (int i = 0; i < 20000; ++i) col[static_cast<std::size_t>(i)] = U(i, j);
      CHECK(mean(col) == doctest::Approx(0.5).epsilon(0.02));
      CHECK(sd(col) == doctest::Approx(std::sqrt(1.0 / 12.0)).epsilon(0.05));
    }
    std::vector<double> c0(20000), c1(20000);
    for (int i = 0; i < 20000; ++i) {
      c0[static_cast<std::size_t>(i)] = U(i, 0);
      c1[static_cast<std::size_t>(i)] = U(i, 1);
    }
    CHECK(std::fabs(pearson(c0, c1)) < 3.0 / std::sqrt(20000.0));
  }

  SUBCASE("near-comonotone pair has high rank correlation") {
    Eigen::MatrixXd rho(2, 2);
    rho << 1.0, 0.99, 0.99, 1.0;
    const Eigen::MatrixXd U = dgp::copula_sample(rho, 10000, rng);
    std::vector<double> c0(10000), c1(10000);
    for (int i = 0; i < 10000; ++i) {
      c0[static_cast<std::size_t>(i)] = U(i, 0);
      c1[static_cast<std::size_t>(i)] = U(i, 1);
    }
    // ranks of uniforms are the uniforms themselves, up to ties
    CHECK(pearson(c0, c1) > 0.95);
  }

  SUBCASE("shipped matrix is reproduced in normal scores within 0.03") {
    dgp::Params p;
    p.id = 5;
    const Eigen::MatrixXd rho = p.rho();
    REQUIRE(rho.rows() == 6);
    const std::size_t n = 40000;
    const Eigen::MatrixXd U = dgp::copula_sample(rho, n, rng);
    for (int a = 0; a < 6; ++a)
      for (int b = a + 1; b < 6; ++b) {
        std::vector<double> za(n), zb(n);
        for (std::size_t i = 0; i < n; ++i) {
          za[i] = norm_quantile(U(static_cast<Eigen::Index>(i), a));
          zb[i] = norm_quantile(U(static_cast<Eigen::Index>(i), b));
        }
        CHECK(pearson(za, zb) == doctest::Approx(rho(a, b)).epsilon(1.0).scale(0.03));
      }
  }

  SUBCASE("non-PD input is rejected") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 1.2, 1.2, 1.0;
    CHECK_THROWS_AS(dgp::copula_sample(bad, 10, rng), std::invalid_argument);
  }
}

TEST_CASE("process 1 marginals and prevalence") {
  const dgp::Spec spec{1, 1, cached_params(1)};
  RngStream rng(42, 0, "gen1");
  const dgp::CompleteData cd = dgp::generate(spec, 100000, rng);
  const Dataset& d = cd.data;
  CHECK(mean(d.col("A").values) == doctest::Approx(0.15).epsilon(1.0).scale(0.01));
  CHECK(mean(d.col("W1").values) == doctest::Approx(0.21).epsilon(1.0).scale(0.01));
  CHECK(mean(d.col("W3").values) == doctest::Approx(0.59).epsilon(1.0).scale(0.01));
}

TEST_CASE("process 2 continuous confounder moments") {
  const dgp::Spec spec{2, 1, cached_params(2)};
  RngStream rng(43, 0, "gen2");
  const dgp::CompleteData cd = dgp::generate(spec, 100000, rng);
  CHECK(mean(cd.data.col("W4").values) == doctest::Approx(3.0).epsilon(1.0).scale(0.05));
  CHECK(sd(cd.data.col("W5").values) == doctest::Approx(2.0).epsilon(1.0).scale(0.05));
}

TEST_CASE("process 5 kendall tau of the strongly coupled confounder pair") {
  const dgp::Spec spec{5, 1, cached_params(5)};

  // the (W2, W3) copula coordinates carry rho = 0.7 exactly, so on the
  // uniform scale tau = (2/pi) asin(rho)
  RngStream rng(44, 0, "tau");
  const Eigen::MatrixXd U = dgp::copula_sample(spec.params.rho(), 60000, rng);
  std::vector<double> u2(60000), u3(60000);
  for (int i = 0; i < 60000; ++i) {
    u2[static_cast<std::size_t>(i)] = U(i, 1);
    u3[static_cast<std::size_t>(i)] = U(i, 2);
  }
  const double tau_expected = 2.0 / M_PI * std::asin(0.7);
  CHECK(kendall_tau_a(u2, u3) ==
        doctest::Approx(tau_expected).epsilon(1.0).scale(0.03));

  // realized (W2, W3): discretization attenuates tau; oracle via an
  // independent brute-force simulation of the same transform
  RngStream rng2(44, 1, "tau-real");
  const dgp::CompleteData cd = dgp::generate(spec, 60000, rng2);
  const double tau_data =
      kendall_tau_a(cd.data.col("W2").values, cd.data.col("W3").values);

  RngStream oracle_rng(44, 2, "tau-oracle");
  const std::size_t n_oracle = 200000;
  std::vector<double> w2o(n_oracle), w3o(n_oracle);
  const dgp::Params& p = spec.params;
  for (std::size_t i = 0; i < n_oracle; ++i) {
    const double b = oracle_rng.normal();
    const double z2 = oracle_rng.normal();
    const double z3 = 0.7 * z2 + std::sqrt(1.0 - 0.49) * oracle_rng.normal();
    const double q2 = norm_cdf(z2), q3 = norm_cdf(z3);
    w2o[i] = q2 > expit(p.beta0 + p.beta1 * b) ? 1.0 : 0.0;
    double w[4], zsum = 0.0;
    for (int k = 0; k < 4; ++k) {
      w[k] = std::exp(p.gamma0k[static_cast<std::size_t>(k)] +
                      p.gamma1k[static_cast<std::size_t>(k)] * b);
      zsum += w[k];
    }
    double u = q3 * zsum;
    int code = 0;
    while (code < 3 && u > w[code]) {
      u -= w[code];
      ++code;
    }
    w3o[i] = code;
  }
  const double tau_oracle = kendall_tau_a(w2o, w3o);
  CHECK(tau_data == doctest::Approx(tau_oracle).epsilon(1.0).scale(0.03));
}

TEST_CASE("positivity quantification") {
  const dgp::Spec spec1{1, 1, cached_params(1)};

  SUBCASE("level 1 stays under one percent") {
    RngStream rng(45, 0, "pos1");
    const dgp::CompleteData cd = dgp::generate(spec1, 2000, rng);
    const auto res = dgp::quantify_positivity(cd.data, spec1);
    CHECK(res.proportion <= 0.01);
  }

  SUBCASE("levels two and three hit their bands and increase monotonically") {
    double prev = -1.0;
    const std::array<double, 3> centers = {0.004, 0.10, 0.30};
    const std::array<double, 3> tols = {0.006, 0.03, 0.05};
    for (int level = 1; level <= 3; ++level) {
      dgp::Spec spec{1, level, cached_params(1)};
      RngStream rng(46, static_cast<std::uint64_t>(level), "pos");
      const dgp::CompleteData cd = dgp::generate(spec, 100000, rng);
      const auto res = dgp::quantify_positivity(cd.data, spec);
      CHECK(res.proportion ==
            doctest::Approx(centers[static_cast<std::size_t>(level - 1)])
                .epsilon(1.0)
                .scale(tols[static_cast<std::size_t>(level - 1)]));
      CHECK(res.proportion > prev);
      prev = res.proportion;
    }
  }

  SUBCASE("bounded linear predictor cannot violate") {
    dgp::Params p = cached_params(1);
    for (auto& c : p.eta_inter_coefs) c = 0.0;
    for (auto& c : p.eta_main_coefs) c = std::clamp(c, -0.5, 0.5);
    p.eta0 = {0.0, 0.0, 0.0};
    p.multiplier = {1.0, 1.0, 1.0};
    dgp::Spec spec{1, 1, p};
    RngStream rng(47, 0, "pos0");
    const dgp::CompleteData cd = dgp::generate(spec, 20000, rng);
    CHECK(dgp::quantify_positivity(cd.data, spec).proportion == 0.0);
  }
}

TEST_CASE("true effect accessor and the refit g-formula oracle") {
  dgp::Params p = cached_params(1);
  p.ate = 0.20;
  CHECK(dgp::true_ate({1, 1, p}) == 0.20);
  CHECK(dgp::true_ate({1, 3, p}) == 0.20);  // level invariance

  // independent oracle: refit the exact outcome model on a large sample; the
  // exposure coefficient of the refit is the g-formula effect because the
  // exposure enters additively
  const dgp::Spec spec{1, 1, cached_params(1)};
  RngStream rng(48, 0, "gform");
  const std::size_t n = 1000000;
  const dgp::CompleteData cd = dgp::generate(spec, n, rng);
  const dgp::Structure st = dgp::structure(1);
  const dgp::Params& pp = spec.params;

  std::vector<std::string> names = {"(Intercept)", "A"};
  for (int v : st.outcome_mains) names.push_back(dgp::var_name(v));
  const std::size_t n_terms = 2 + st.outcome_mains.size() + st.outcome_inters.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_terms));
  X.col(0).setOnes();
  for (std::size_t i = 0; i < n; ++i)
    X(static_cast<Eigen::Index>(i), 1) = cd.data.col("A").values[i];
  Eigen::Index jc = 2;
  for (int v : st.outcome_mains) {
    const auto& vals = cd.data.col(dgp::var_name(v)).values;
    for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), jc) = vals[i];
    ++jc;
  }
  for (const auto& set : st.outcome_inters) {
    for (std::size_t i = 0; i < n; ++i) {
      double prod = 1.0;
      for (int v : set)
        prod *= cd.data.col(dgp::var_name(v)).values[i] - pp.center.at(v);
      X(static_cast<Eigen::Index>(i), jc) = prod;
    }
    names.push_back("inter" + std::to_string(jc));
    ++jc;
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    y[static_cast<Eigen::Index>(i)] = cd.data.col("Y").values[i];
  const GlmFit fit = fit_ols(X, names, y, Collinear::drop);
  CHECK(fit.beta[1] == doctest::Approx(dgp::true_ate(spec)).epsilon(1.0).scale(0.005));
}

TEST_CASE("determinism: identical stream identity reproduces the dataset") {
  const dgp::Spec spec{2, 2, cached_params(2)};
  RngStream r1(50, 7, "gen");
  RngStream r2(50, 7, "gen");
  const dgp::CompleteData a = dgp::generate(spec, 500, r1);
  const dgp::CompleteData b = dgp::generate(spec, 500, r2);
  for (std::size_t c = 0; c < a.data.n_cols(); ++c)
    for (std::size_t i = 0; i < 500; ++i)
      CHECK(a.data.col(c).values[i] == b.data.col(c).values[i]);
}

TEST_CASE("dropping the gamma confounder reproduces the four-variable process") {
  // shared columns of processes 4 and 5 agree distributionally
  const dgp::Spec s4{4, 1, cached_params(4)};
  const dgp::Spec s5{5, 1, cached_params(5)};
  RngStream r4(51, 0, "ks4");
  RngStream r5(52, 0, "ks5");
  const dgp::CompleteData d4 = dgp::generate(s4, 10000, r4);
  const dgp::CompleteData d5 = dgp::generate(s5, 10000, r5);
  for (const char* col : {"B", "W1", "W2", "W3", "W4", "W5"}) {
    const auto ks = ks_two_sample(d4.data.col(col).values, d5.data.col(col).values);
    CHECK(ks.p_value > 0.001);
  }
}
