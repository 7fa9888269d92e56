#include "mdt/tmle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mdt/simd/kernels.hpp"
#include "mdt/special.hpp"

namespace mdt::tmle {

namespace {

Eigen::VectorXd logit_vec(const Eigen::VectorXd& p) {
  Eigen::VectorXd out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) out[i] = std::log(p[i] / (1.0 - p[i]));
  return out;
}

// replace a binary column's values wholesale (for counterfactual predictions)
Dataset with_constant(const Dataset& d, const std::string& col, double value) {
  Dataset out(d.n_rows());
  for (std::size_t i = 0; i < d.n_cols(); ++i) {
    Column c = d.col(i);
    if (c.name == col) {
      std::fill(c.values.begin(), c.values.end(), value);
      std::fill(c.missing.begin(), c.missing.end(), 0);
    }
    out.add_column(std::move(c));
  }
  return out;
}

}  // namespace

ScaledOutcome scale_outcome(std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("scale_outcome: empty input");
  double lo = y[0], hi = y[0];
  for (double v : y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) throw std::invalid_argument("scale_outcome: constant outcome");
  ScaledOutcome out;
  out.y_min = lo;
  out.y_max = hi;
  out.y01.reserve(y.size());
  for (double v : y) out.y01.push_back((v - lo) / (hi - lo));
  return out;
}

CleverCovariates clever_covariates(const Eigen::VectorXd& a,
                                   const Eigen::VectorXd& g1,
                                   const Eigen::VectorXd* y_observed,
                                   const Eigen::VectorXd* p_my_obs) {
  const Eigen::Index n = a.size();
  CleverCovariates cc;
  cc.h1.resize(n);
  cc.h0.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double w = 1.0;
    if (y_observed) {
      if ((*y_observed)[i] == 0.0) {
        cc.h1[i] = 0.0;
        cc.h0[i] = 0.0;
        continue;
      }
      w = 1.0 / (*p_my_obs)[i];
    }
    cc.h1[i] = a[i] * w / g1[i];
    cc.h0[i] = (1.0 - a[i]) * w / (1.0 - g1[i]);
  }
  return cc;
}

FluctuationFit fluctuate(const Eigen::VectorXd& q01, const Eigen::VectorXd& h1,
                         const Eigen::VectorXd& h0, const Eigen::VectorXd& y01) {
  FluctuationFit out;
  Eigen::MatrixXd X(h1.size(), 2);
  X.col(0) = h1;
  X.col(1) = h0;
  if (X.cwiseAbs().maxCoeff() == 0.0) return out;  // no information, eps = 0
  const Eigen::VectorXd offset = logit_vec(q01);
  try {
    const GlmFit fit = fit_logistic(X, {"H1", "H0"}, y01, 200, 1e-10,
                                    Collinear::drop, &offset);
    out.eps1 = fit.beta[0];
    out.eps0 = fit.beta[1];
    out.capped = fit.capped;
    out.converged = fit.converged;
    if (!fit.converged && !fit.capped) {
      // genuine failure: fall back to the initial estimate
      out.eps1 = 0.0;
      out.eps0 = 0.0;
    }
  } catch (const std::exception&) {
    out.converged = false;
    out.eps1 = 0.0;
    out.eps0 = 0.0;
  }
  return out;
}

FittedTmle estimate(const Dataset& d, Flavor flavor,
                    const std::vector<std::string>& w_cols, const std::string& a_col,
                    const std::string& y_col, RngStream& rng, const Options& opt,
                    const NuisanceOverrides* forced) {
  const std::size_t n = d.n_rows();
  if (n == 0) throw std::invalid_argument("tmle: zero rows");
  const Column& acol = d.col(a_col);
  const Column& ycol = d.col(y_col);

  for (const auto& w : w_cols)
    if (d.col(w).any_missing())
      throw std::invalid_argument("tmle: confounder " + w + " has missing cells");
  if (acol.any_missing()) throw std::invalid_argument("tmle: exposure has missing cells");
  if (flavor == Flavor::standard && ycol.any_missing())
    throw std::invalid_argument("tmle: standard flavor requires complete outcome");

  Eigen::VectorXd a(n), yobs_ind(n);
  bool a_const = true;
  for (std::size_t i = 0; i < n; ++i) {
    a[static_cast<Eigen::Index>(i)] = acol.values[i];
    yobs_ind[static_cast<Eigen::Index>(i)] = ycol.missing[i] ? 0.0 : 1.0;
    if (acol.values[i] != acol.values[0]) a_const = false;
  }
  if (a_const) throw std::invalid_argument("tmle: exposure is constant");

  std::vector<std::size_t> obs_rows;
  std::vector<double> y_obs_raw;
  for (std::size_t i = 0; i < n; ++i)
    if (!ycol.missing[i]) {
      obs_rows.push_back(i);
      y_obs_raw.push_back(ycol.values[i]);
    }
  if (obs_rows.empty()) throw std::invalid_argument("tmle: no observed outcomes");

  const ScaledOutcome sc = scale_outcome(y_obs_raw);
  const double range = sc.y_max - sc.y_min;

  FittedTmle out;
  out.n_used = n;

  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);

  // ---- initial outcome fit on observed-Y rows, predictions for everyone
  Eigen::VectorXd q_obs01(n), q1_01(n), q0_01(n);
  if (forced && forced->q_obs) {
    q_obs01 = (*forced->q_obs - Eigen::VectorXd::Constant(n, sc.y_min)) / range;
    q1_01 = (*forced->q1 - Eigen::VectorXd::Constant(n, sc.y_min)) / range;
    q0_01 = (*forced->q0 - Eigen::VectorXd::Constant(n, sc.y_min)) / range;
  } else {
    SlProblem qp;
    qp.data = &d;
    qp.covariates = w_cols;
    qp.covariates.insert(qp.covariates.begin(), a_col);
    qp.rows = obs_rows;
    qp.family = Family::gaussian;
    qp.y.resize(static_cast<Eigen::Index>(obs_rows.size()));
    for (std::size_t k = 0; k < obs_rows.size(); ++k)
      qp.y[static_cast<Eigen::Index>(k)] = sc.y01[k];
    SlOptions so;
    so.folds = opt.sl_folds;
    const SlFit qfit = sl_fit(qp, LearnerLib::standard(Family::gaussian), rng, so);
    out.sl_weights_q = qfit.weights;
    q_obs01 = qfit.predict(d, all_rows);
    const Dataset d1 = with_constant(d, a_col, 1.0);
    const Dataset d0 = with_constant(d, a_col, 0.0);
    q1_01 = qfit.predict(d1, all_rows);
    q0_01 = qfit.predict(d0, all_rows);
  }
  kern::clamp(q_obs01.data(), q_obs01.data(), static_cast<std::size_t>(q_obs01.size()),
              opt.q_bound, 1.0 - opt.q_bound);
  kern::clamp(q1_01.data(), q1_01.data(), static_cast<std::size_t>(q1_01.size()),
              opt.q_bound, 1.0 - opt.q_bound);
  kern::clamp(q0_01.data(), q0_01.data(), static_cast<std::size_t>(q0_01.size()),
              opt.q_bound, 1.0 - opt.q_bound);

  // ---- propensity fit
  Eigen::VectorXd g1(n);
  if (forced && forced->g1) {
    g1 = *forced->g1;
  } else {
    SlProblem gp;
    gp.data = &d;
    gp.covariates = w_cols;
    gp.rows = all_rows;
    gp.family = Family::binomial;
    gp.y = a;
    SlOptions so;
    so.folds = opt.sl_folds;
    const SlFit gfit = sl_fit(gp, LearnerLib::standard(Family::binomial), rng, so);
    out.sl_weights_g = gfit.weights;
    g1 = gfit.predict(d, all_rows);
  }
  for (Eigen::Index i = 0; i < g1.size(); ++i) {
    const double orig = g1[i];
    g1[i] = std::clamp(orig, opt.g_trunc, 1.0 - opt.g_trunc);
    if (g1[i] != orig) ++out.g_truncation_count;
  }

  // ---- outcome-missingness model (extended flavors only)
  const bool extended = flavor != Flavor::standard;
  Eigen::VectorXd m_obs(n), m1(n), m0(n);
  if (extended) {
    if (forced && forced->p_my_obs1) {
      m1 = *forced->p_my_obs1;
      m0 = *forced->p_my_obs0;
      for (std::size_t i = 0; i < n; ++i)
        m_obs[static_cast<Eigen::Index>(i)] =
            a[static_cast<Eigen::Index>(i)] > 0.5 ? m1[static_cast<Eigen::Index>(i)]
                                                  : m0[static_cast<Eigen::Index>(i)];
    } else if (ycol.any_missing()) {
      SlProblem mp;
      mp.data = &d;
      mp.covariates = w_cols;
      mp.covariates.insert(mp.covariates.begin(), a_col);
      mp.rows = all_rows;
      mp.family = Family::binomial;
      mp.y = yobs_ind;
      SlOptions so;
      so.folds = opt.sl_folds;
      const SlFit mfit = sl_fit(mp, LearnerLib::standard(Family::binomial), rng, so);
      out.sl_weights_my = mfit.weights;
      m_obs = mfit.predict(d, all_rows);
      const Dataset d1 = with_constant(d, a_col, 1.0);
      const Dataset d0 = with_constant(d, a_col, 0.0);
      m1 = mfit.predict(d1, all_rows);
      m0 = mfit.predict(d0, all_rows);
    } else {
      m_obs.setOnes();
      m1.setOnes();
      m0.setOnes();
    }
    for (Eigen::Index i = 0; i < m_obs.size(); ++i) {
      const double orig = m_obs[i];
      m_obs[i] = std::max(m_obs[i], opt.my_trunc);
      m1[i] = std::max(std::min(m1[i], 1.0), opt.my_trunc);
      m0[i] = std::max(std::min(m0[i], 1.0), opt.my_trunc);
      if (m_obs[i] != orig) ++out.my_truncation_count;
    }
  }

  // ---- fluctuation on the observed clever covariates
  const CleverCovariates cc =
      extended ? clever_covariates(a, g1, &yobs_ind, &m_obs)
               : clever_covariates(a, g1);
  Eigen::VectorXd y01_all = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < obs_rows.size(); ++k)
    y01_all[static_cast<Eigen::Index>(obs_rows[k])] = sc.y01[k];

  const FluctuationFit ff = fluctuate(q_obs01, cc.h1, cc.h0, y01_all);
  out.eps1 = ff.eps1;
  out.eps0 = ff.eps0;
  out.fluct_converged = ff.converged;
  out.fluct_capped = ff.capped;

  // ---- targeted update and plug-in ATE; the counterfactual covariates set
  // the intervention indicators to one
  Eigen::VectorXd q1s(n), q0s(n), qobs_s(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const double h1_cf = extended ? 1.0 / (g1[i] * m1[i]) : 1.0 / g1[i];
    const double h0_cf =
        extended ? 1.0 / ((1.0 - g1[i]) * m0[i]) : 1.0 / (1.0 - g1[i]);
    q1s[i] = expit(logit(q1_01[i]) + ff.eps1 * h1_cf);
    q0s[i] = expit(logit(q0_01[i]) + ff.eps0 * h0_cf);
    qobs_s[i] = expit(logit(q_obs01[i]) + ff.eps1 * cc.h1[i] + ff.eps0 * cc.h0[i]);
  }

  const double ate01 = (q1s - q0s).mean();
  out.ate = range * ate01;

  out.q1_star.resize(n);
  out.q0_star.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.q1_star[i] = sc.y_min + range * q1s[static_cast<Eigen::Index>(i)];
    out.q0_star[i] = sc.y_min + range * q0s[static_cast<Eigen::Index>(i)];
  }

  out.eic.resize(n);
  double eic_sum = 0.0, eic_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    double resid_part = 0.0;
    if (!ycol.missing[i]) {
      const double y_raw = ycol.values[i];
      const double q_raw = sc.y_min + range * qobs_s[ii];
      resid_part = (cc.h1[ii] - cc.h0[ii]) * (y_raw - q_raw);
    }
    const double eic = resid_part + range * (q1s[ii] - q0s[ii]) - out.ate;
    out.eic[i] = eic;
    eic_sum += eic;
    eic_sq += eic * eic;
  }
  out.eic_mean = eic_sum / static_cast<double>(n);
  const double var =
      eic_sq / static_cast<double>(n) - out.eic_mean * out.eic_mean;
  out.se = std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  out.ci_low = out.ate - 1.959963984540054 * out.se;
  out.ci_high = out.ate + 1.959963984540054 * out.se;
  return out;
}

}  // namespace mdt::tmle
