#include "mdt/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "mdt/design.hpp"
#include "mdt/glm.hpp"
#include "mdt/simd/kernels.hpp"
#include "mdt/special.hpp"
#include "mdt/stats.hpp"

namespace mdt::dgp {

namespace {

// 6x6 copula correlation; processes 3 and 4 use the leading 5x5 block.
// The nominal pattern (+-0.3 weak, +-0.7 strong entries) is not positive
// definite as written, so the weak entries were projected to the nearest
// values that make the matrix PD (min eigenvalue 5e-3) while the strong 0.7
// dependencies are preserved exactly.
const double kRho6[6][6] = {
    {1.0, 0.2708, -0.2357, 0.3292, 0.2357, -0.3248},
    {0.2708, 1.0, 0.7, 0.2657, 0.3758, 0.3292},
    {-0.2357, 0.7, 1.0, 0.3758, 0.7, 0.2357},
    {0.3292, 0.2657, 0.3758, 1.0, 0.7, 0.2708},
    {0.2357, 0.3758, 0.7, 0.7, 1.0, -0.2357},
    {-0.3248, 0.3292, 0.2357, 0.2708, -0.2357, 1.0}};

bool var_is_binary(int var, const Structure& st) {
  switch (var) {
    case kW1:
    case kW2:
      return true;
    case kW3:
      return !st.w3_categorical;
    case kW4:
    case kW5:
      return !st.w45_continuous;
    default:
      return false;
  }
}

double sign_alternating(std::size_t i) { return i % 2 == 0 ? 1.0 : -1.0; }

std::vector<double> default_coefs(const std::vector<int>& vars, const Structure& st) {
  std::vector<double> out;
  out.reserve(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const double mag = var_is_binary(vars[i], st) ? 0.6 : 0.2;
    out.push_back(sign_alternating(i) * mag);
  }
  return out;
}

std::vector<double> default_inter_coefs(const std::vector<std::vector<int>>& sets,
                                        const Structure& st) {
  std::vector<double> out;
  out.reserve(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    bool all_binary = true;
    for (int v : sets[i]) all_binary = all_binary && var_is_binary(v, st);
    out.push_back(sign_alternating(i) * (all_binary ? 0.6 : 0.2));
  }
  return out;
}

// raw generated columns before assembly into a Dataset
struct RawCols {
  std::size_t n = 0;
  std::vector<double> v[7];  // index by var id; v[0] = B
  const std::vector<double>& of(int var) const { return v[var]; }
};

double centered(const RawCols& cols, const Params& p, int var, std::size_t i) {
  return cols.v[var][i] - p.center.at(var);
}

std::vector<double> main_lp(const RawCols& cols, const std::vector<int>& vars,
                            const std::vector<double>& coefs) {
  std::vector<double> lp(cols.n, 0.0);
  for (std::size_t k = 0; k < vars.size(); ++k)
    kern::axpy(coefs[k], cols.v[vars[k]].data(), lp.data(), cols.n);
  return lp;
}

std::vector<double> inter_lp(const RawCols& cols, const Params& p,
                             const std::vector<std::vector<int>>& sets,
                             const std::vector<double>& coefs) {
  std::vector<double> lp(cols.n, 0.0);
  std::vector<double> prod(cols.n);
  for (std::size_t k = 0; k < sets.size(); ++k) {
    std::fill(prod.begin(), prod.end(), 1.0);
    for (int v : sets[k])
      for (std::size_t i = 0; i < cols.n; ++i) prod[i] *= centered(cols, p, v, i);
    kern::axpy(coefs[k], prod.data(), lp.data(), cols.n);
  }
  return lp;
}

RawCols draw_confounders(const Spec& spec, std::size_t n, RngStream& rng) {
  const Structure st = structure(spec.id);
  const Params& p = spec.params;
  RawCols cols;
  cols.n = n;
  for (auto& c : cols.v) c.assign(n, 0.0);
  if (!st.has_w6) cols.v[kW6].clear();

  for (std::size_t i = 0; i < n; ++i) cols.v[kB][i] = rng.normal();

  if (st.copula) {
    const Eigen::MatrixXd U = copula_sample(p.rho(), n, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double b = cols.v[kB][i];
      cols.v[kW1][i] = U(static_cast<Eigen::Index>(i), 0) > expit(p.alpha0) ? 1.0 : 0.0;
      cols.v[kW2][i] =
          U(static_cast<Eigen::Index>(i), 1) > expit(p.beta0 + p.beta1 * b) ? 1.0 : 0.0;
      if (st.w3_categorical) {
        double w[4], z = 0.0;
        for (int k = 0; k < 4; ++k) {
          w[k] = std::exp(p.gamma0k[static_cast<std::size_t>(k)] +
                          p.gamma1k[static_cast<std::size_t>(k)] * b);
          z += w[k];
        }
        double u = U(static_cast<Eigen::Index>(i), 2) * z;
        int code = 0;
        while (code < 3 && u > w[code]) {
          u -= w[code];
          ++code;
        }
        cols.v[kW3][i] = static_cast<double>(code);
      } else {
        cols.v[kW3][i] =
            U(static_cast<Eigen::Index>(i), 2) > expit(p.gamma0 + p.gamma1 * b) ? 1.0 : 0.0;
      }
      cols.v[kW4][i] =
          p.delta0 + p.delta1 * b + norm_quantile(U(static_cast<Eigen::Index>(i), 3));
      cols.v[kW5][i] = p.zeta0 + 2.0 * norm_quantile(U(static_cast<Eigen::Index>(i), 4));
      if (st.has_w6) {
        const double tb = std::clamp(b, -0.99, 0.99);
        const double shape = p.xi0 + p.xi1 * tb;
        const double rate = p.tau0 + p.tau1 * tb;
        cols.v[kW6][i] =
            gamma_quantile(shape, rate, U(static_cast<Eigen::Index>(i), 5));
      }
    }
    return cols;
  }

  // independent route (processes 1 and 2): column-wise draws
  for (std::size_t i = 0; i < n; ++i)
    cols.v[kW1][i] = rng.bernoulli(expit(p.alpha0)) ? 1.0 : 0.0;
  for (std::size_t i = 0; i < n; ++i)
    cols.v[kW2][i] =
        rng.bernoulli(expit(p.beta0 + p.beta1 * cols.v[kB][i])) ? 1.0 : 0.0;
  for (std::size_t i = 0; i < n; ++i)
    cols.v[kW3][i] =
        rng.bernoulli(expit(p.gamma0 + p.gamma1 * cols.v[kB][i])) ? 1.0 : 0.0;
  if (st.w45_continuous) {
    for (std::size_t i = 0; i < n; ++i)
      cols.v[kW4][i] = p.delta0 + p.delta1 * cols.v[kB][i] + rng.normal();
    for (std::size_t i = 0; i < n; ++i) cols.v[kW5][i] = rng.normal(p.zeta0, 2.0);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      cols.v[kW4][i] =
          rng.bernoulli(expit(p.delta0 + p.delta1 * cols.v[kB][i])) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i)
      cols.v[kW5][i] = rng.bernoulli(expit(p.zeta0)) ? 1.0 : 0.0;
  }
  return cols;
}

std::vector<double> exposure_lp(const RawCols& cols, const Spec& spec) {
  const Structure st = structure(spec.id);
  const Params& p = spec.params;
  std::vector<double> lp = main_lp(cols, st.exposure_mains, p.eta_main_coefs);
  const std::vector<double> il =
      inter_lp(cols, p, st.exposure_inters, p.eta_inter_coefs);
  const double m = p.multiplier[static_cast<std::size_t>(spec.level - 1)];
  const double e0 = p.eta0[static_cast<std::size_t>(spec.level - 1)];
  for (std::size_t i = 0; i < cols.n; ++i) lp[i] = e0 + lp[i] + m * il[i];
  return lp;
}

std::vector<double> outcome_systematic(const RawCols& cols,
                                       const std::vector<double>& a,
                                       const Spec& spec) {
  const Structure st = structure(spec.id);
  const Params& p = spec.params;
  std::vector<double> f = main_lp(cols, st.outcome_mains, p.ups_main_coefs);
  const std::vector<double> fi =
      inter_lp(cols, p, st.outcome_inters, p.ups_inter_coefs);
  const double c = p.outcome_scale[static_cast<std::size_t>(spec.level - 1)];
  const double u0 = p.ups0[static_cast<std::size_t>(spec.level - 1)];
  std::vector<double> mu(cols.n);
  for (std::size_t i = 0; i < cols.n; ++i)
    mu[i] = u0 + p.ate * a[i] + c * (f[i] + fi[i]);
  return mu;
}

}  // namespace

std::string var_name(int id) {
  if (id == kB) return "B";
  return "W" + std::to_string(id);
}

Structure structure(int dgp_id) {
  if (dgp_id < 1 || dgp_id > 5) throw std::invalid_argument("dgp id must be 1..5");
  Structure st;
  st.w45_continuous = dgp_id >= 2;
  st.copula = dgp_id >= 3;
  st.w3_categorical = dgp_id >= 4;
  st.has_w6 = dgp_id == 5;

  st.exposure_mains = {kW1, kW2, kW3, kW4, kW5};
  if (st.has_w6) st.exposure_mains.push_back(kW6);
  st.exposure_mains.push_back(kB);

  st.exposure_inters = {{kW1, kW3}, {kW1, kW4}, {kW1, kW5},
                        {kW3, kW4}, {kW3, kW5}, {kW4, kW5}};
  if (st.has_w6) {
    st.exposure_inters.push_back({kW1, kW6});
    st.exposure_inters.push_back({kW4, kW6});
    st.exposure_inters.push_back({kW5, kW6});
  }

  st.outcome_mains = {kW1, kW2, kW3, kW4, kW5};
  if (st.has_w6) st.outcome_mains.push_back(kW6);

  st.outcome_inters = {{kW1, kW3}, {kW1, kW4}, {kW1, kW5},
                       {kW3, kW4}, {kW3, kW5}, {kW4, kW5}};
  if (!st.has_w6) {
    st.outcome_inters.push_back({kW1, kW3, kW4});
    st.outcome_inters.push_back({kW1, kW3, kW5});
    st.outcome_inters.push_back({kW1, kW4, kW5});
    st.outcome_inters.push_back({kW3, kW4, kW5});
    st.outcome_inters.push_back({kW1, kW3, kW4, kW5});
  } else {
    st.outcome_inters.push_back({kW1, kW6});
    st.outcome_inters.push_back({kW4, kW6});
    st.outcome_inters.push_back({kW5, kW6});
    st.outcome_inters.push_back({kW1, kW4, kW6});
    st.outcome_inters.push_back({kW1, kW5, kW6});
    st.outcome_inters.push_back({kW1, kW4, kW5});
    st.outcome_inters.push_back({kW4, kW5, kW6});
    st.outcome_inters.push_back({kW1, kW4, kW5, kW6});
  }
  return st;
}

Eigen::MatrixXd Params::rho() const {
  const std::size_t dim = id == 5 ? 6 : 5;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  if (rho_flat.size() == dim * dim) {
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rho_flat[i * dim + j];
  } else {
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kRho6[i][j];
  }
  return out;
}

Eigen::MatrixXd copula_sample(const Eigen::MatrixXd& rho, std::size_t n,
                              RngStream& rng) {
  const Eigen::Index k = rho.rows();
  if (rho.cols() != k) throw std::invalid_argument("copula_sample: rho not square");
  if (!rho.isApprox(rho.transpose(), 1e-12))
    throw std::invalid_argument("copula_sample: rho not symmetric");
  const Eigen::LLT<Eigen::MatrixXd> llt(rho);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("copula_sample: rho not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  Eigen::MatrixXd U(static_cast<Eigen::Index>(n), k);
  Eigen::VectorXd z(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) z[j] = rng.normal();
    const Eigen::VectorXd corr = L * z;
    for (Eigen::Index j = 0; j < k; ++j)
      U(static_cast<Eigen::Index>(i), j) = norm_cdf(corr[j]);
  }
  return U;
}

CompleteData generate(const Spec& spec, std::size_t n, RngStream& rng) {
  const Structure st = structure(spec.id);
  const Params& p = spec.params;
  const RawCols cols = draw_confounders(spec, n, rng);

  const std::vector<double> alp = exposure_lp(cols, spec);
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = rng.bernoulli(expit(alp[i])) ? 1.0 : 0.0;

  const std::vector<double> mu = outcome_systematic(cols, a, spec);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = mu[i] + rng.normal();

  Dataset d(n);
  const std::vector<std::uint8_t> observed(n, 0);
  d.add_column({"B", VarKind::continuous(), cols.v[kB], observed});
  d.add_column({"W1", VarKind::binary(), cols.v[kW1], observed});
  d.add_column({"W2", VarKind::binary(), cols.v[kW2], observed});
  if (st.w3_categorical)
    d.add_column({"W3", VarKind::categorical({"1", "2", "3", "4"}), cols.v[kW3],
                  observed});
  else
    d.add_column({"W3", VarKind::binary(), cols.v[kW3], observed});
  d.add_column({"W4", st.w45_continuous ? VarKind::continuous() : VarKind::binary(),
                cols.v[kW4], observed});
  d.add_column({"W5", st.w45_continuous ? VarKind::continuous() : VarKind::binary(),
                cols.v[kW5], observed});
  if (st.has_w6) d.add_column({"W6", VarKind::positive(), cols.v[kW6], observed});
  d.add_column({"A", VarKind::binary(), a, observed});
  d.add_column({"Y", VarKind::continuous(), y, observed});
  return {std::move(d), p.ate};
}

double true_ate(const Spec& spec) { return spec.params.ate; }

PositivityResult quantify_positivity(const Dataset& d, const Spec& spec,
                                     double threshold) {
  const Structure st = structure(spec.id);
  const Params& p = spec.params;
  const std::size_t n = d.n_rows();

  // true-form design: intercept, raw mains, centered interaction products
  auto col_vals = [&](int var) -> const std::vector<double>& {
    return d.col(var_name(var)).values;
  };
  const std::size_t n_terms =
      1 + st.exposure_mains.size() + st.exposure_inters.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_terms));
  std::vector<std::string> names;
  names.reserve(n_terms);
  X.col(0).setOnes();
  names.emplace_back("(Intercept)");
  Eigen::Index jc = 1;
  for (int v : st.exposure_mains) {
    const auto& vals = col_vals(v);
    for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), jc) = vals[i];
    names.push_back(var_name(v));
    ++jc;
  }
  for (const auto& set : st.exposure_inters) {
    std::string nm;
    for (std::size_t i = 0; i < n; ++i) {
      double prod = 1.0;
      for (int v : set) prod *= col_vals(v)[i] - p.center.at(v);
      X(static_cast<Eigen::Index>(i), jc) = prod;
    }
    for (std::size_t s = 0; s < set.size(); ++s)
      nm += (s ? ":" : "") + var_name(set[s]);
    names.push_back(nm);
    ++jc;
  }

  Eigen::VectorXd a(static_cast<Eigen::Index>(n));
  const auto& avals = d.col("A").values;
  for (std::size_t i = 0; i < n; ++i) a[static_cast<Eigen::Index>(i)] = avals[i];

  const GlmFit fit = fit_logistic(X, names, a, 200, 1e-8, Collinear::drop);
  const Eigen::VectorXd phat = fit.predict_prob(X);
  std::size_t violations = 0;
  for (Eigen::Index i = 0; i < phat.size(); ++i)
    if (std::min(phat[i], 1.0 - phat[i]) < threshold) ++violations;
  return {static_cast<double>(violations) / static_cast<double>(n),
          fit.converged};
}

Targets default_targets(int dgp_id) {
  Targets t;
  if (dgp_id < 1 || dgp_id > 5) throw std::invalid_argument("dgp id must be 1..5");
  const double ates[5] = {0.20, 0.22, 0.18, 0.24, 0.21};
  t.ate = ates[dgp_id - 1];
  switch (dgp_id) {
    case 1:
      t.w1_p = 0.21;
      t.w2_p = 0.13;
      t.w3_p = 0.59;
      t.w4_p = 0.37;
      t.w5_p = 0.38;
      t.y_sd = 1.1;
      break;
    case 2:
    case 3:
      t.w1_p = 0.4;
      t.w2_p = 0.3;
      t.w3_p = 0.59;
      t.y_sd = 1.3;
      break;
    case 4:
    case 5:
      t.w1_p = 0.4;
      t.w2_p = 0.3;
      t.w3_cat = {0.25, 0.46, 0.20, 0.09};
      t.y_sd = dgp_id == 4 ? 1.5 : 1.8;
      break;
    default:
      throw std::invalid_argument("dgp id must be 1..5");
  }
  return t;
}

namespace {

// E[g(B)] for B ~ N(0,1) via composite Simpson on [-8, 8]
double normal_expect(const std::function<double(double)>& g) {
  const int n = 2000;
  const double a = -8.0, b = 8.0, h = (b - a) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * g(x) * std::exp(-0.5 * x * x);
  }
  return s * h / 3.0 / std::sqrt(2.0 * M_PI);
}

// solve E[expit(c + slope B)] = target for c
double solve_marginal_intercept(double slope, double target) {
  double lo = -12.0, hi = 12.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double val =
        normal_expect([&](double b) { return expit(mid + slope * b); });
    if (val < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::array<double, 4> solve_softmax_intercepts(const std::array<double, 4>& slopes,
                                               const std::array<double, 4>& targets) {
  std::array<double, 4> c{0.0, 0.0, 0.0, 0.0};
  for (int it = 0; it < 300; ++it) {
    std::array<double, 4> achieved{};
    for (int k = 0; k < 4; ++k) {
      achieved[static_cast<std::size_t>(k)] = normal_expect([&](double b) {
        double w[4], z = 0.0;
        for (int j = 0; j < 4; ++j) {
          w[j] = std::exp(c[static_cast<std::size_t>(j)] +
                          slopes[static_cast<std::size_t>(j)] * b);
          z += w[j];
        }
        return w[k] / z;
      });
    }
    double err = 0.0;
    for (int k = 0; k < 4; ++k)
      err = std::max(err, std::fabs(achieved[static_cast<std::size_t>(k)] -
                                    targets[static_cast<std::size_t>(k)]));
    if (err < 1e-7) break;
    for (int k = 1; k < 4; ++k)
      c[static_cast<std::size_t>(k)] +=
          std::log(targets[static_cast<std::size_t>(k)] /
                   achieved[static_cast<std::size_t>(k)]);
  }
  return c;
}

}  // namespace

Params calibrate(int dgp_id, const Targets& t, std::uint64_t seed,
                 std::size_t n_panel) {
  const Structure st = structure(dgp_id);
  Params p;
  p.id = dgp_id;
  p.ate = t.ate;
  p.y_sd_target = t.y_sd;

  // ---- marginal intercepts (quadrature over B)
  const bool copula = st.copula;
  auto binary_target = [&](double target) { return copula ? 1.0 - target : target; };
  p.alpha0 = logit(binary_target(t.w1_p));
  p.beta1 = 0.2;
  p.beta0 = solve_marginal_intercept(p.beta1, binary_target(t.w2_p));
  if (st.w3_categorical) {
    p.gamma1k = {0.0, 0.2, -0.2, 0.2};
    p.gamma0k = solve_softmax_intercepts(p.gamma1k, t.w3_cat);
  } else {
    p.gamma1 = 0.2;
    p.gamma0 = solve_marginal_intercept(p.gamma1, binary_target(t.w3_p));
  }
  if (st.w45_continuous) {
    p.delta0 = t.w4_mean;
    p.delta1 = 0.2;
    p.zeta0 = t.w5_mean;
  } else {
    p.delta1 = 0.2;
    p.delta0 = solve_marginal_intercept(p.delta1, t.w4_p);
    p.zeta0 = logit(t.w5_p);
  }
  if (st.has_w6) {
    p.xi0 = 2.0;
    p.xi1 = 0.2;
    p.tau0 = 1.0;
    p.tau1 = 0.2;
  }

  p.eta_main_coefs = default_coefs(st.exposure_mains, st);
  p.eta_inter_coefs = default_inter_coefs(st.exposure_inters, st);
  p.ups_main_coefs = default_coefs(st.outcome_mains, st);
  p.ups_inter_coefs = default_inter_coefs(st.outcome_inters, st);

  // ---- Monte Carlo panel with common random numbers
  Spec spec{dgp_id, 1, p};
  RngStream panel_rng(seed, 0, "dgp-cal-panel");
  const RawCols cols = draw_confounders(spec, n_panel, panel_rng);
  std::vector<double> a_uniforms(n_panel);
  for (auto& u : a_uniforms) u = panel_rng.uniform();

  // centers and spreads frozen from the panel
  for (int v = kB; v <= kW6; ++v) {
    if (cols.v[v].empty()) continue;
    p.center[v] = mean(cols.v[v]);
    p.spread[v] = sd(cols.v[v]);
  }
  spec.params = p;

  const std::vector<double> e_main =
      main_lp(cols, st.exposure_mains, p.eta_main_coefs);
  const std::vector<double> e_inter =
      inter_lp(cols, p, st.exposure_inters, p.eta_inter_coefs);

  const double viol_cut = std::log((1.0 - 0.002) / 0.002);
  std::vector<double> lp(n_panel), prob(n_panel);

  auto mean_prob = [&](double e0, double m) {
    for (std::size_t i = 0; i < n_panel; ++i) lp[i] = e0 + e_main[i] + m * e_inter[i];
    kern::expit(lp.data(), prob.data(), n_panel);
    return kern::sum(prob.data(), n_panel) / static_cast<double>(n_panel);
  };
  auto solve_eta0 = [&](double m) {
    double lo = -25.0, hi = 10.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mean_prob(mid, m) < t.exposure_prevalence)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto violation_rate = [&](double e0, double m) {
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n_panel; ++i)
      if (std::fabs(e0 + e_main[i] + m * e_inter[i]) > viol_cut) ++cnt;
    return static_cast<double>(cnt) / static_cast<double>(n_panel);
  };

  auto bisect_multiplier = [&](double target) {
    double lo = 0.0, hi = 40.0;
    double m = 1.0, e0 = solve_eta0(1.0);
    for (int it = 0; it < 45; ++it) {
      m = 0.5 * (lo + hi);
      e0 = solve_eta0(m);
      const double v = violation_rate(e0, m);
      if (std::fabs(v - target) < 5e-4) break;
      if (v < target)
        lo = m;
      else
        hi = m;
    }
    return std::pair<double, double>{m, e0};
  };

  for (int level = 1; level <= 3; ++level) {
    const std::size_t li = static_cast<std::size_t>(level - 1);
    const double target = t.violation[li];
    // the quantification procedure refits the exposure model, which counts
    // slightly more violations than the truth; correct the working target
    // until the refit-based rate matches
    double working = target;
    for (int rounds = 0; rounds < 4; ++rounds) {
      const auto [m, e0] = bisect_multiplier(working);
      p.multiplier[li] = m;
      p.eta0[li] = e0;
      spec.params = p;
      spec.level = level;
      RngStream check_rng(seed, 100 + static_cast<std::uint64_t>(rounds), "dgp-cal-check");
      const CompleteData check = generate(spec, 100000, check_rng);
      const double v_refit = quantify_positivity(check.data, spec).proportion;
      if (std::fabs(v_refit - target) <= 0.005) break;
      working = std::max(5e-4, working - (v_refit - target));
    }
  }
  spec.level = 1;
  spec.params = p;

  // ---- outcome scale and intercept per level
  const std::vector<double> f_main =
      main_lp(cols, st.outcome_mains, p.ups_main_coefs);
  const std::vector<double> f_inter =
      inter_lp(cols, p, st.outcome_inters, p.ups_inter_coefs);
  std::vector<double> f(n_panel);
  for (std::size_t i = 0; i < n_panel; ++i) f[i] = f_main[i] + f_inter[i];
  const double f_mean = mean(f);

  for (int level = 1; level <= 3; ++level) {
    const std::size_t li = static_cast<std::size_t>(level - 1);
    std::vector<double> g(n_panel);
    for (std::size_t i = 0; i < n_panel; ++i) {
      const double pe = expit(p.eta0[li] + e_main[i] + p.multiplier[li] * e_inter[i]);
      g[i] = p.ate * (a_uniforms[i] < pe ? 1.0 : 0.0);
    }
    const double g_mean = mean(g);
    double var_g = 0.0, var_f = 0.0, cov_gf = 0.0;
    for (std::size_t i = 0; i < n_panel; ++i) {
      var_g += (g[i] - g_mean) * (g[i] - g_mean);
      var_f += (f[i] - f_mean) * (f[i] - f_mean);
      cov_gf += (g[i] - g_mean) * (f[i] - f_mean);
    }
    var_g /= static_cast<double>(n_panel);
    var_f /= static_cast<double>(n_panel);
    cov_gf /= static_cast<double>(n_panel);

    const double need = t.y_sd * t.y_sd - 1.0 - var_g;
    const double disc = cov_gf * cov_gf + var_f * need;
    if (disc < 0.0)
      throw std::runtime_error("outcome variance target unreachable");
    const double c = (-cov_gf + std::sqrt(disc)) / var_f;
    p.outcome_scale[li] = c;
    p.ups0[li] = -(g_mean + c * f_mean);
  }

  return p;
}

}  // namespace mdt::dgp
