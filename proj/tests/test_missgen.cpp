#include <doctest.h>

#include <cmath>
#include <map>

#include "mdt/dgp.hpp"
#include "mdt/glm.hpp"
#include "mdt/missgen.hpp"
#include "mdt/special.hpp"
#include "mdt/stats.hpp"

using namespace mdt;

namespace {

const dgp::Params& cached_params1() {
  static const dgp::Params p = dgp::calibrate(1, dgp::default_targets(1), 20240815);
  return p;
}

const dgp::Spec& spec1() {
  static const dgp::Spec s{1, 1, cached_params1()};
  return s;
}

const Dataset& panel1() {
  static const Dataset d = [] {
    RngStream rng(61, 0, "panel");
    return dgp::generate(spec1(), 200000, rng).data;
  }();
  return d;
}

missgen::MdagSpec calibrated_mdag(char mdag) {
  static std::map<char, missgen::MdagSpec> cache;
  auto it = cache.find(mdag);
  if (it == cache.end()) {
    missgen::MdagSpec ms = missgen::make_mdag(mdag, spec1());
    missgen::calibrate_joint(ms, panel1(), 20240815);
    it = cache.emplace(mdag, std::move(ms)).first;
  }
  return it->second;
}

}  // namespace

TEST_CASE("structural inventory: nesting of substantive parent sets") {
  std::map<char, std::size_t> n_parents;
  for (char mdag : {'A', 'B', 'C', 'D', 'E'}) {
    const missgen::MdagSpec ms = missgen::make_mdag(mdag, spec1());
    ms.validate_nesting();
    std::size_t total = 0;
    for (const auto& m : ms.models) total += m.parents.size();
    n_parents[mdag] = total;
    if (mdag == 'A')
      for (const auto& m : ms.models) CHECK(m.parents.empty());
    if (mdag == 'B')
      for (const auto& m : ms.models)
        for (const auto& par : m.parents)
          CHECK((par.col == "W1" || par.col == "W5"));
    // the exposure and outcome never mask the always-observed columns
    for (const auto& m : ms.models) {
      CHECK(m.target != "B");
      CHECK(m.target != "W1");
      CHECK(m.target != "W5");
    }
  }
  CHECK(n_parents['A'] < n_parents['B']);
  CHECK(n_parents['B'] < n_parents['C']);
  CHECK(n_parents['C'] < n_parents['D']);
  CHECK(n_parents['D'] < n_parents['E']);
}

TEST_CASE("analytic intercept for chain-free MCAR models") {
  missgen::MdagSpec ms = missgen::make_mdag('A', spec1());
  // zero the chain arrows so every model is intercept-only
  for (auto& m : ms.models) m.m_parents.clear();
  missgen::calibrate_intercepts(ms, panel1(), 20240815);
  for (const auto& m : ms.models) {
    const double expected = logit(ms.margins.at(m.target));
    CHECK(m.intercept == doctest::Approx(expected).epsilon(1.0).scale(1e-3));
  }
}

TEST_CASE("joint calibration hits margins and union targets") {
  const missgen::MdagSpec ms = calibrated_mdag('E');
  RngStream rng(62, 0, "impose");
  const dgp::CompleteData cd = dgp::generate(spec1(), 100000, rng);
  const missgen::MaskedData masked = missgen::impose(cd.data, ms, rng);
  const auto margins = missingness_margins(
      masked.data, {{"A/Y", {"A", "Y"}}, {"Any", ms.any_group}});
  CHECK(margins.per_column.at("W2") == doctest::Approx(0.25).epsilon(1.0).scale(0.01));
  CHECK(margins.per_column.at("W3") == doctest::Approx(0.30).epsilon(1.0).scale(0.01));
  CHECK(margins.per_column.at("W4") == doctest::Approx(0.25).epsilon(1.0).scale(0.01));
  CHECK(margins.per_column.at("A") == doctest::Approx(0.30).epsilon(1.0).scale(0.01));
  CHECK(margins.per_column.at("Y") == doctest::Approx(0.20).epsilon(1.0).scale(0.01));
  CHECK(margins.per_group.at("A/Y") == doctest::Approx(0.40).epsilon(1.0).scale(0.01));
  CHECK(margins.per_group.at("Any") == doctest::Approx(0.50).epsilon(1.0).scale(0.01));

  // the always-observed columns are never masked
  for (const char* col : {"B", "W1", "W5"}) {
    CHECK(margins.per_column.at(col) == 0.0);
  }
}

TEST_CASE("MCAR indicators are independent of the substantive data") {
  const missgen::MdagSpec ms = calibrated_mdag('A');
  RngStream rng(63, 0, "mcar");
  const dgp::CompleteData cd = dgp::generate(spec1(), 100000, rng);
  const missgen::MaskedData masked = missgen::impose(cd.data, ms, rng);

  const auto& my = masked.data.col("M_Y").values;
  for (const char* col : {"A", "W1", "W2", "W3", "W4", "W5"}) {
    // 2x2 contingency table against the retained complete values
    const auto& v = masked.complete.col(col).values;
    std::vector<std::vector<double>> table(2, std::vector<double>(2, 0.0));
    for (std::size_t i = 0; i < my.size(); ++i)
      table[my[i] > 0.5 ? 1 : 0][v[i] > 0.5 ? 1 : 0] += 1.0;
    CHECK(chi2_independence_p(table) > 1e-4);
  }
  // continuous outcome: two-sample location comparison via correlation
  const auto& y = masked.complete.col("Y").values;
  CHECK(std::fabs(pearson(my, y)) < 3.5 / std::sqrt(static_cast<double>(y.size())));
}

TEST_CASE("self-masking outcome coefficient is recovered by a refit oracle") {
  const missgen::MdagSpec ms = calibrated_mdag('E');
  RngStream rng(64, 0, "refit");
  const dgp::CompleteData cd = dgp::generate(spec1(), 100000, rng);
  const missgen::MaskedData masked = missgen::impose(cd.data, ms, rng);
  const std::size_t n = cd.data.n_rows();

  // refit the exact outcome-missingness model on the retained complete values
  const missgen::IndicatorModel& model = ms.models.back();
  REQUIRE(model.target == "Y");
  const std::size_t p = model.parents.size() + model.m_parents.size() + 1;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<std::string> names = {"(Intercept)"};
  X.col(0).setOnes();
  Eigen::Index jc = 1;
  Eigen::Index y_col_idx = -1;
  for (const auto& par : model.parents) {
    const auto& vals = masked.complete.col(par.col).values;
    for (std::size_t i = 0; i < n; ++i)
      X(static_cast<Eigen::Index>(i), jc) =
          par.standardize ? (vals[i] - par.center) / par.scale : vals[i];
    if (par.col == "Y") y_col_idx = jc;
    names.push_back(par.col);
    ++jc;
  }
  for (const auto& [idx, coef] : model.m_parents) {
    (void)coef;
    const auto& vals = masked.data.col("M_" + ms.models[static_cast<std::size_t>(idx)].target).values;
    for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), jc) = vals[i];
    names.push_back("M_" + ms.models[static_cast<std::size_t>(idx)].target);
    ++jc;
  }
  REQUIRE(y_col_idx > 0);
  Eigen::VectorXd my(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    my[static_cast<Eigen::Index>(i)] = masked.data.col("M_Y").values[i];
  const GlmFit fit = fit_logistic(X, names, my);
  REQUIRE(fit.converged);
  CHECK(fit.beta[y_col_idx] == doctest::Approx(0.2).epsilon(1.0).scale(0.05));
}

TEST_CASE("MAR mechanism leaves no direct outcome arrow into exposure missingness") {
  const missgen::MdagSpec ms = calibrated_mdag('B');
  RngStream rng(65, 0, "refitb");
  const dgp::CompleteData cd = dgp::generate(spec1(), 100000, rng);
  const missgen::MaskedData masked = missgen::impose(cd.data, ms, rng);
  const std::size_t n = cd.data.n_rows();

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 5);
  X.col(0).setOnes();
  const dgp::Params& p = spec1().params;
  for (std::size_t i = 0; i < n; ++i) {
    X(static_cast<Eigen::Index>(i), 1) = masked.complete.col("W1").values[i];
    X(static_cast<Eigen::Index>(i), 2) = masked.complete.col("W5").values[i];
    X(static_cast<Eigen::Index>(i), 3) = masked.complete.col("B").values[i];
    X(static_cast<Eigen::Index>(i), 4) =
        masked.complete.col("Y").values[i] / p.y_sd_target;
  }
  Eigen::VectorXd ma(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    ma[static_cast<Eigen::Index>(i)] = masked.data.col("M_A").values[i];
  const GlmFit fit =
      fit_logistic(X, {"(Intercept)", "W1", "W5", "B", "Ystd"}, ma);
  REQUIRE(fit.converged);
  CHECK(fit.beta[4] == doctest::Approx(0.0).epsilon(1.0).scale(0.05));
}

TEST_CASE("mask semantics: indicator equals mask and values are retained internally") {
  const missgen::MdagSpec ms = calibrated_mdag('C');
  RngStream rng(66, 0, "mask");
  const dgp::CompleteData cd = dgp::generate(spec1(), 5000, rng);
  const missgen::MaskedData masked = missgen::impose(cd.data, ms, rng);
  for (const auto& m : ms.models) {
    const Column& col = masked.data.col(m.target);
    const Column& ind = masked.data.col("M_" + m.target);
    for (std::size_t i = 0; i < col.missing.size(); ++i) {
      CHECK(static_cast<double>(col.missing[i]) == ind.values[i]);
      if (col.missing[i]) {
        CHECK(std::isnan(col.values[i]));
        CHECK_FALSE(std::isnan(masked.complete.col(m.target).values[i]));
      } else {
        CHECK(col.values[i] == masked.complete.col(m.target).values[i]);
      }
    }
  }
}
