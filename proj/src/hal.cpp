#include "mdt/hal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mdt/simd/kernels.hpp"
#include "mdt/special.hpp"
#include "mdt/stats.hpp"

namespace mdt::hal {

namespace {

std::vector<double> knots_for(const Column& col, std::span<const std::size_t> rows,
                              int bins) {
  if (col.kind.type == VarType::binary) return {1.0};
  std::vector<double> vals;
  vals.reserve(rows.size());
  for (std::size_t r : rows) vals.push_back(col.values[r]);
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  if (col.kind.type == VarType::categorical) {
    // indicator per non-reference level code
    std::vector<double> out;
    for (double v : vals)
      if (v > vals.front()) out.push_back(v);
    return out;
  }
  if (static_cast<int>(vals.size()) <= bins) return vals;
  std::vector<double> out;
  std::vector<double> sorted_rows;
  sorted_rows.reserve(rows.size());
  for (std::size_t r : rows) sorted_rows.push_back(col.values[r]);
  for (int j = 1; j <= bins; ++j)
    out.push_back(quantile(sorted_rows, static_cast<double>(j) / bins));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint64_t column_hash(const std::vector<std::uint64_t>& bits) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint64_t w : bits) {
    h ^= w;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint64_t> eval_func(const BasisFunction& f, const HalBasis& basis,
                                     const Dataset& d,
                                     std::span<const std::size_t> rows) {
  const std::size_t n = rows.size();
  const std::size_t words = (n + 63) / 64;
  std::vector<std::uint64_t> bits(words, ~0ull);
  if (n % 64) bits[words - 1] = (1ull << (n % 64)) - 1;
  for (std::size_t t = 0; t < f.covariates.size(); ++t) {
    const Column& col =
        d.col(basis.covariate_names[static_cast<std::size_t>(f.covariates[t])]);
    const double knot = f.knots[t];
    for (std::size_t i = 0; i < n; ++i) {
      if (col.values[rows[i]] < knot) bits[i / 64] &= ~(1ull << (i % 64));
    }
  }
  return bits;
}

}  // namespace

HalBasis build_basis(const Dataset& d, const std::vector<std::string>& covariates,
                     std::span<const std::size_t> rows, const BasisConfig& config) {
  if (config.max_degree < 1 || config.max_degree > 2)
    throw std::invalid_argument("build_basis: max_degree must be 1 or 2");
  HalBasis basis;
  basis.covariate_names = covariates;

  std::vector<std::vector<double>> knots(covariates.size());
  for (std::size_t c = 0; c < covariates.size(); ++c)
    knots[c] = knots_for(d.col(covariates[c]), rows, config.bins);

  for (std::size_t c = 0; c < covariates.size(); ++c)
    for (double k : knots[c])
      basis.funcs.push_back({{static_cast<int>(c)}, {k}});

  if (config.max_degree >= 2) {
    for (std::size_t a = 0; a + 1 < covariates.size(); ++a)
      for (std::size_t b = a + 1; b < covariates.size(); ++b)
        for (double ka : knots[a])
          for (double kb : knots[b])
            basis.funcs.push_back(
                {{static_cast<int>(a), static_cast<int>(b)}, {ka, kb}});
  }

  // drop exact duplicates and empty columns as evaluated on the build rows
  std::set<std::uint64_t> seen;
  std::vector<BasisFunction> kept;
  for (const auto& f : basis.funcs) {
    const auto bits = eval_func(f, basis, d, rows);
    bool any = false;
    for (std::uint64_t w : bits)
      if (w) {
        any = true;
        break;
      }
    if (!any) continue;
    const std::uint64_t h = column_hash(bits);
    if (seen.count(h)) continue;
    seen.insert(h);
    kept.push_back(f);
  }
  basis.funcs = std::move(kept);
  return basis;
}

double BasisMatrix::dot(std::size_t j, const double* v) const {
  return kern::bitset_dot(cols[j].data(), v, n);
}

void BasisMatrix::add(std::size_t j, double c, double* v) const {
  kern::bitset_add(cols[j].data(), c, v, n);
}

BasisMatrix evaluate_basis(const HalBasis& basis, const Dataset& d,
                           std::span<const std::size_t> rows) {
  BasisMatrix X;
  X.n = rows.size();
  X.words = (X.n + 63) / 64;
  X.cols.reserve(basis.funcs.size());
  X.frac.reserve(basis.funcs.size());
  for (const auto& f : basis.funcs) {
    auto bits = eval_func(f, basis, d, rows);
    std::size_t pc = 0;
    for (std::uint64_t w : bits) pc += static_cast<std::size_t>(__builtin_popcountll(w));
    X.frac.push_back(static_cast<double>(pc) / static_cast<double>(X.n));
    X.cols.push_back(std::move(bits));
  }
  return X;
}

namespace {

double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

// gaussian coordinate descent at one lambda; beta/r updated in place
void cd_gaussian(const BasisMatrix& X, std::vector<double>& r, double& beta0,
                 std::vector<double>& beta, double lambda, const LassoOptions& opt,
                 bool& converged) {
  const double n = static_cast<double>(X.n);
  const std::size_t p = X.cols.size();
  converged = false;
  std::vector<std::size_t> active;
  bool sweep_all = true;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    if (sweep_all) active.clear();
    const std::size_t count = sweep_all ? p : active.size();
    for (std::size_t idx = 0; idx < count; ++idx) {
      const std::size_t j = sweep_all ? idx : active[idx];
      const double vj = X.frac[j];
      if (vj <= 0.0) continue;
      const double g = X.dot(j, r.data()) / n;
      const double z = g + vj * beta[j];
      const double bj = soft_threshold(z, lambda) / vj;
      const double delta = bj - beta[j];
      if (delta != 0.0) {
        X.add(j, -delta, r.data());
        beta[j] = bj;
        max_delta = std::max(max_delta, std::fabs(delta));
      }
      if (sweep_all && beta[j] != 0.0) active.push_back(j);
    }
    // unpenalized intercept
    const double d0 = kern::sum(r.data(), X.n) / n;
    if (d0 != 0.0) {
      beta0 += d0;
      for (auto& v : r) v -= d0;
      max_delta = std::max(max_delta, std::fabs(d0));
    }
    if (max_delta < opt.tol) {
      if (sweep_all) {
        converged = true;
        break;
      }
      sweep_all = true;  // verify on a full sweep
    } else {
      sweep_all = false;
    }
  }
}

void cd_binomial(const BasisMatrix& X, const std::vector<double>& y, double& beta0,
                 std::vector<double>& beta, double lambda, const LassoOptions& opt,
                 bool& converged) {
  const std::size_t n = X.n;
  const double nd = static_cast<double>(n);
  const std::size_t p = X.cols.size();
  converged = false;

  std::vector<double> lp(n, beta0), prob(n), w(n), r(n), wr(n), wcol(n);
  for (std::size_t j = 0; j < p; ++j)
    if (beta[j] != 0.0) X.add(j, beta[j], lp.data());

  for (int outer = 0; outer < opt.max_outer; ++outer) {
    kern::expit(lp.data(), prob.data(), n);
    double max_update = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-5);
      r[i] = (y[i] - prob[i]) / w[i];
      wr[i] = y[i] - prob[i];
    }
    const double wsum = kern::sum(w.data(), n);

    // inner weighted lasso on the quadratic approximation
    std::vector<std::size_t> active;
    bool sweep_all = true;
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
      double max_delta = 0.0;
      if (sweep_all) active.clear();
      const std::size_t count = sweep_all ? p : active.size();
      for (std::size_t idx = 0; idx < count; ++idx) {
        const std::size_t j = sweep_all ? idx : active[idx];
        const double vj = kern::bitset_dot(X.cols[j].data(), w.data(), n) / nd;
        if (vj <= 0.0) continue;
        const double g = kern::bitset_dot(X.cols[j].data(), wr.data(), n) / nd;
        const double z = g + vj * beta[j];
        const double bj = soft_threshold(z, lambda) / vj;
        const double delta = bj - beta[j];
        if (delta != 0.0) {
          kern::bitset_add(X.cols[j].data(), -delta, r.data(), n);
          kern::bitset_axpy(X.cols[j].data(), -delta, w.data(), wr.data(), n);
          beta[j] = bj;
          max_delta = std::max(max_delta, std::fabs(delta));
        }
        if (sweep_all && beta[j] != 0.0) active.push_back(j);
      }
      const double d0 = kern::dot(w.data(), r.data(), n) / wsum;
      if (d0 != 0.0) {
        beta0 += d0;
        for (std::size_t i = 0; i < n; ++i) {
          r[i] -= d0;
          wr[i] -= d0 * w[i];
        }
        max_delta = std::max(max_delta, std::fabs(d0));
      }
      if (max_delta < opt.tol) {
        if (sweep_all) break;
        sweep_all = true;
      } else {
        sweep_all = false;
      }
      (void)wcol;
    }

    // refresh the linear predictor and test outer convergence
    std::vector<double> lp_new(n, beta0);
    for (std::size_t j = 0; j < p; ++j)
      if (beta[j] != 0.0) X.add(j, beta[j], lp_new.data());
    for (std::size_t i = 0; i < n; ++i)
      max_update = std::max(max_update, std::fabs(lp_new[i] - lp[i]));
    lp.swap(lp_new);
    if (max_update < 1e-6) {
      converged = true;
      break;
    }
  }
}

double fit_norm(const HalFit& f) {
  double s = std::fabs(f.beta0);
  for (double b : f.beta) s += std::fabs(b);
  return s;
}

}  // namespace

std::vector<double> default_lambda_grid(const BasisMatrix& X,
                                        const std::vector<double>& y, Family family,
                                        const LassoOptions& opt) {
  const double n = static_cast<double>(X.n);
  const double ybar = kern::sum(y.data(), X.n) / n;
  std::vector<double> r(y);
  for (auto& v : r) v -= ybar;
  (void)family;  // the gradient at the null model has the same form
  double lmax = 0.0;
  for (std::size_t j = 0; j < X.cols.size(); ++j)
    lmax = std::max(lmax, std::fabs(X.dot(j, r.data()) / n));
  lmax = std::max(lmax, 1e-8);
  std::vector<double> grid(static_cast<std::size_t>(opt.n_lambda));
  const double lmin = lmax * opt.lambda_min_ratio;
  for (int k = 0; k < opt.n_lambda; ++k)
    grid[static_cast<std::size_t>(k)] =
        std::exp(std::log(lmax) + (std::log(lmin) - std::log(lmax)) * k /
                                      (opt.n_lambda - 1));
  return grid;
}

std::vector<HalFit> lasso_path(const BasisMatrix& X, const std::vector<double>& y,
                               Family family, std::vector<double> lambdas,
                               const LassoOptions& opt) {
  if (X.cols.empty()) throw std::invalid_argument("lasso_path: empty basis");
  std::vector<HalFit> path;
  path.reserve(lambdas.size());

  const std::size_t n = X.n;
  const double nd = static_cast<double>(n);
  std::vector<double> beta(X.cols.size(), 0.0);
  double beta0 = 0.0;
  std::vector<double> r;
  if (family == Family::gaussian) {
    beta0 = kern::sum(y.data(), n) / nd;
    r = y;
    for (auto& v : r) v -= beta0;
  } else {
    const double ybar = kern::sum(y.data(), n) / nd;
    beta0 = logit(std::clamp(ybar, 1e-6, 1.0 - 1e-6));
  }

  for (double lambda : lambdas) {
    bool conv = false;
    if (family == Family::gaussian)
      cd_gaussian(X, r, beta0, beta, lambda, opt, conv);
    else
      cd_binomial(X, y, beta0, beta, lambda, opt, conv);

    HalFit fit;
    fit.family = family;
    fit.lambda = lambda;
    fit.beta0 = beta0;
    fit.beta = beta;
    fit.converged = conv;
    fit.l1_norm = fit_norm(fit);
    if (family == Family::gaussian) {
      fit.sigma2 = kern::sum_sq(r.data(), n) / nd;
    }
    path.push_back(std::move(fit));
  }
  return path;
}

double kkt_violation(const BasisMatrix& X, const std::vector<double>& y,
                     const HalFit& fit) {
  const std::size_t n = X.n;
  const double nd = static_cast<double>(n);
  std::vector<double> resid(n, 0.0);
  if (fit.family == Family::gaussian) {
    std::vector<double> pred(n, fit.beta0);
    for (std::size_t j = 0; j < X.cols.size(); ++j)
      if (fit.beta[j] != 0.0) X.add(j, fit.beta[j], pred.data());
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - pred[i];
  } else {
    std::vector<double> lp(n, fit.beta0), prob(n);
    for (std::size_t j = 0; j < X.cols.size(); ++j)
      if (fit.beta[j] != 0.0) X.add(j, fit.beta[j], lp.data());
    kern::expit(lp.data(), prob.data(), n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - prob[i];
  }
  double worst = std::fabs(kern::sum(resid.data(), n) / nd);  // intercept score
  for (std::size_t j = 0; j < X.cols.size(); ++j) {
    const double g = X.dot(j, resid.data()) / nd;
    if (fit.beta[j] == 0.0)
      worst = std::max(worst, std::max(0.0, std::fabs(g) - fit.lambda));
    else
      worst = std::max(worst, std::fabs(g - fit.lambda * (fit.beta[j] > 0 ? 1.0 : -1.0)));
  }
  return worst;
}

Eigen::VectorXd HalModel::predict(const Dataset& d,
                                  std::span<const std::size_t> rows) const {
  const BasisMatrix X = evaluate_basis(basis, d, rows);
  std::vector<double> pred(rows.size(), fit.beta0);
  for (std::size_t j = 0; j < X.cols.size(); ++j)
    if (fit.beta[j] != 0.0) X.add(j, fit.beta[j], pred.data());
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  if (family == Family::binomial) {
    std::vector<double> prob(rows.size());
    kern::expit(pred.data(), prob.data(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = prob[i];
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = pred[i];
  }
  return out;
}

HalModel fit_cv(const HalProblem& prob, int folds, RngStream& rng,
                const LassoOptions& opt) {
  if (prob.rows.size() != prob.y.size())
    throw std::invalid_argument("fit_cv: rows/y mismatch");
  HalModel model;
  model.covariates = prob.covariates;
  model.family = prob.family;
  model.basis = build_basis(*prob.data, prob.covariates, prob.rows, prob.config);
  const BasisMatrix X = evaluate_basis(model.basis, *prob.data, prob.rows);
  const std::vector<double> lambdas =
      default_lambda_grid(X, prob.y, prob.family, opt);
  model.path = lasso_path(X, prob.y, prob.family, lambdas, opt);

  // fold assignment (shuffled round robin)
  const std::size_t n = prob.rows.size();
  std::vector<int> fold_of(n);
  {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    for (std::size_t k = 0; k < n; ++k) fold_of[idx[k]] = static_cast<int>(k % folds);
  }

  model.cv_risk.assign(lambdas.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    std::vector<double> ytr, yte;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] == f) {
        test_rows.push_back(prob.rows[i]);
        yte.push_back(prob.y[i]);
      } else {
        train_rows.push_back(prob.rows[i]);
        ytr.push_back(prob.y[i]);
      }
    }
    const BasisMatrix Xtr = evaluate_basis(model.basis, *prob.data, train_rows);
    const BasisMatrix Xte = evaluate_basis(model.basis, *prob.data, test_rows);
    const std::vector<HalFit> fold_path = lasso_path(Xtr, ytr, prob.family, lambdas, opt);
    for (std::size_t k = 0; k < fold_path.size(); ++k) {
      std::vector<double> pred(test_rows.size(), fold_path[k].beta0);
      for (std::size_t j = 0; j < Xte.cols.size(); ++j)
        if (fold_path[k].beta[j] != 0.0) Xte.add(j, fold_path[k].beta[j], pred.data());
      double risk = 0.0;
      if (prob.family == Family::gaussian) {
        for (std::size_t i = 0; i < yte.size(); ++i)
          risk += (yte[i] - pred[i]) * (yte[i] - pred[i]);
      } else {
        for (std::size_t i = 0; i < yte.size(); ++i) {
          const double lp = pred[i];
          risk += std::log1p(std::exp(-std::fabs(lp))) + std::max(lp, 0.0) -
                  yte[i] * lp;
        }
      }
      model.cv_risk[k] += risk;
    }
  }
  for (auto& riskv : model.cv_risk) riskv /= static_cast<double>(n);

  model.cv_index = static_cast<std::size_t>(
      std::min_element(model.cv_risk.begin(), model.cv_risk.end()) -
      model.cv_risk.begin());
  model.fit = model.path[model.cv_index];
  model.c_cv = model.fit.l1_norm;
  model.c_u = model.c_cv;
  return model;
}

void undersmooth(HalModel& model, const HalProblem& prob,
                 const UndersmoothOptions& opt) {
  const BasisMatrix X = evaluate_basis(model.basis, *prob.data, prob.rows);
  const std::size_t n = X.n;
  const double nd = static_cast<double>(n);
  const HalFit cv_fit = model.path[model.cv_index];

  // criterion set: basis functions selected by the CV fit; thresholds frozen
  // at the CV fit's residuals
  std::vector<std::size_t> selected;
  for (std::size_t j = 0; j < cv_fit.beta.size(); ++j)
    if (cv_fit.beta[j] != 0.0) selected.push_back(j);

  auto residuals = [&](const HalFit& f) {
    std::vector<double> pred(n, f.beta0);
    for (std::size_t j = 0; j < X.cols.size(); ++j)
      if (f.beta[j] != 0.0) X.add(j, f.beta[j], pred.data());
    if (f.family == Family::binomial) {
      std::vector<double> prob_v(n);
      kern::expit(pred.data(), prob_v.data(), n);
      pred.swap(prob_v);
    }
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = prob.y[i] - pred[i];
    return r;
  };

  const std::vector<double> r_cv = residuals(cv_fit);
  std::vector<double> thresholds(selected.size());
  const double scale = std::sqrt(nd) * std::log(nd);
  for (std::size_t s = 0; s < selected.size(); ++s) {
    const std::size_t j = selected[s];
    // population moments of phi * residual
    const double m1 = X.dot(j, r_cv.data()) / nd;
    double m2 = 0.0;
    {
      std::vector<double> sq(n);
      for (std::size_t i = 0; i < n; ++i) sq[i] = r_cv[i] * r_cv[i];
      m2 = X.dot(j, sq.data()) / nd;
    }
    const double var = std::max(m2 - m1 * m1, 0.0);
    thresholds[s] = std::sqrt(var) / scale;
  }

  auto criterion_met = [&](const HalFit& f) {
    const std::vector<double> r = residuals(f);
    for (std::size_t s = 0; s < selected.size(); ++s) {
      const double score = std::fabs(X.dot(selected[s], r.data()) / nd);
      if (score > thresholds[s] + 1e-12) return false;
    }
    return true;
  };

  model.undersmoothed = true;
  model.undersmooth_converged = true;
  HalFit current = cv_fit;
  if (criterion_met(current)) {
    model.fit = current;
    model.c_u = current.l1_norm;
    return;
  }

  LassoOptions lopt;
  double lambda = cv_fit.lambda;
  double target_c = std::max(cv_fit.l1_norm, 1e-8);
  for (int step = 0; step < opt.max_steps; ++step) {
    target_c *= opt.growth;
    // shrink lambda until the attained bound reaches the target
    HalFit trial = current;
    for (int inner = 0; inner < 60 && trial.l1_norm < target_c; ++inner) {
      lambda *= opt.lambda_shrink;
      trial = lasso_path(X, prob.y, prob.family, {lambda}, lopt)[0];
    }
    current = trial;
    if (criterion_met(current)) {
      model.fit = current;
      model.c_u = current.l1_norm;
      return;
    }
    if (lambda < 1e-10) break;
  }
  model.fit = current;
  model.c_u = current.l1_norm;
  model.undersmooth_converged = false;
}

Dataset synth_generate(const HalModel& exposure_model, const HalModel& outcome_model,
                       const Dataset& pool, const std::vector<std::string>& w_cols,
                       const std::string& a_col, const std::string& y_col,
                       std::size_t n, RngStream& rng) {
  // resample covariate rows with replacement
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = rng.uniform_int(pool.n_rows());

  Dataset out(n);
  const std::vector<std::uint8_t> observed(n, 0);
  for (const auto& w : w_cols) {
    const Column& src = pool.col(w);
    Column c;
    c.name = w;
    c.kind = src.kind;
    c.missing = observed;
    c.values.reserve(n);
    for (std::size_t r : rows) c.values.push_back(src.values[r]);
    out.add_column(std::move(c));
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Eigen::VectorXd pa = exposure_model.predict(out, all);
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pa[static_cast<Eigen::Index>(i)], 0.0, 1.0);
    a[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  out.add_column({a_col, VarKind::binary(), std::move(a), observed});

  const Eigen::VectorXd mu = outcome_model.predict(out, all);
  const double sigma = std::sqrt(std::max(outcome_model.fit.sigma2, 0.0));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = mu[static_cast<Eigen::Index>(i)] + rng.normal(0.0, sigma);
  out.add_column({y_col, VarKind::continuous(), std::move(y), observed});
  return out;
}

namespace {

double ate_over_rows(const HalModel& outcome_model, const Dataset& d,
                     const std::string& a_col) {
  std::vector<std::size_t> all(d.n_rows());
  std::iota(all.begin(), all.end(), 0);
  Dataset d1(d.n_rows()), d0(d.n_rows());
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    Column col = d.col(c);
    if (col.name == a_col) {
      Column c1 = col, c0 = col;
      std::fill(c1.values.begin(), c1.values.end(), 1.0);
      std::fill(c0.values.begin(), c0.values.end(), 0.0);
      d1.add_column(std::move(c1));
      d0.add_column(std::move(c0));
    } else {
      d1.add_column(col);
      d0.add_column(std::move(col));
    }
  }
  const Eigen::VectorXd y1 = outcome_model.predict(d1, all);
  const Eigen::VectorXd y0 = outcome_model.predict(d0, all);
  return (y1 - y0).mean();
}

}  // namespace

double quasi_true_ate(const HalModel& outcome_model, const Dataset& pool,
                      const std::vector<std::string>& w_cols, const std::string& a_col,
                      std::size_t n_draws, RngStream& rng) {
  std::vector<std::size_t> rows(n_draws);
  for (auto& r : rows) r = rng.uniform_int(pool.n_rows());
  Dataset d(n_draws);
  const std::vector<std::uint8_t> observed(n_draws, 0);
  for (const auto& w : w_cols) {
    const Column& src = pool.col(w);
    Column c;
    c.name = w;
    c.kind = src.kind;
    c.missing = observed;
    for (std::size_t r : rows) c.values.push_back(src.values[r]);
    d.add_column(std::move(c));
  }
  d.add_column({a_col, VarKind::binary(), std::vector<double>(n_draws, 0.0), observed});
  return ate_over_rows(outcome_model, d, a_col);
}

double quasi_true_ate_exact(const HalModel& outcome_model, const Dataset& pool,
                            const std::vector<std::string>& w_cols,
                            const std::string& a_col) {
  Dataset d(pool.n_rows());
  const std::vector<std::uint8_t> observed(pool.n_rows(), 0);
  for (const auto& w : w_cols) {
    const Column& src = pool.col(w);
    d.add_column({w, src.kind, src.values, observed});
  }
  d.add_column(
      {a_col, VarKind::binary(), std::vector<double>(pool.n_rows(), 0.0), observed});
  return ate_over_rows(outcome_model, d, a_col);
}

double assess_positivity(const Dataset& d, const std::vector<std::string>& w_cols,
                         const std::string& a_col, const BasisConfig& config,
                         int folds, RngStream& rng, double threshold) {
  HalProblem prob;
  prob.data = &d;
  prob.covariates = w_cols;
  prob.rows.resize(d.n_rows());
  std::iota(prob.rows.begin(), prob.rows.end(), 0);
  prob.family = Family::binomial;
  prob.config = config;
  const Column& a = d.col(a_col);
  prob.y.assign(a.values.begin(), a.values.end());

  HalModel model = fit_cv(prob, folds, rng);
  undersmooth(model, prob);
  const Eigen::VectorXd p = model.predict(d, prob.rows);
  std::size_t cnt = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (std::min(p[i], 1.0 - p[i]) < threshold) ++cnt;
  return static_cast<double>(cnt) / static_cast<double>(d.n_rows());
}

}  // namespace mdt::hal
