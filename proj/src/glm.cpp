#include "mdt/glm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mdt/simd/kernels.hpp"

namespace mdt {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  return os.str();
}

Eigen::VectorXd expit_vec(const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
  kern::expit(x.data(), out.data(), static_cast<std::size_t>(x.size()));
  return out;
}

double binom_nll(const Eigen::VectorXd& lp, const Eigen::VectorXd& y) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    const double v = lp[i];
    nll += std::log1p(std::exp(-std::fabs(v))) + std::max(v, 0.0) - y[i] * v;
  }
  return nll;
}

}  // namespace

RankError::RankError(std::vector<std::string> cols)
    : std::runtime_error("rank-deficient design; collinear columns: " + join(cols)),
      collinear(std::move(cols)) {}

std::pair<std::vector<Eigen::Index>, std::vector<std::string>> rank_screen(
    const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
  const Eigen::Index p = X.cols();
  const Eigen::MatrixXd G = X.transpose() * X;
  std::vector<Eigen::Index> kept;
  std::vector<std::string> dropped;
  Eigen::MatrixXd L(p, p);  // packed cholesky over kept columns
  for (Eigen::Index j = 0; j < p; ++j) {
    const double gjj = G(j, j);
    if (!(gjj > 0.0)) {
      dropped.push_back(names[static_cast<std::size_t>(j)]);
      continue;
    }
    const Eigen::Index k = static_cast<Eigen::Index>(kept.size());
    Eigen::VectorXd w(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      double s = G(kept[static_cast<std::size_t>(i)], j);
      for (Eigen::Index m = 0; m < i; ++m) s -= L(i, m) * w[m];
      w[i] = s / L(i, i);
    }
    const double resid = gjj - w.squaredNorm();
    if (resid < kRankTol * gjj) {
      dropped.push_back(names[static_cast<std::size_t>(j)]);
      continue;
    }
    L.row(k).head(k) = w.transpose();
    L(k, k) = std::sqrt(resid);
    kept.push_back(j);
  }
  return {kept, dropped};
}

Eigen::VectorXd GlmFit::predict_linear(const Eigen::MatrixXd& X) const {
  return X * beta;
}

Eigen::VectorXd GlmFit::predict_prob(const Eigen::MatrixXd& X) const {
  if (family != Family::binomial)
    throw std::logic_error("predict_prob on non-binomial fit");
  return expit_vec(X * beta);
}

Eigen::MatrixXd GlmFit::predict_classes(const Eigen::MatrixXd& X) const {
  if (family != Family::multinomial)
    throw std::logic_error("predict_classes on non-multinomial fit");
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd out(n, n_classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd lp(n_classes);
    lp[0] = 0.0;
    for (int c = 1; c < n_classes; ++c) lp[c] = X.row(i).dot(beta_mat.row(c - 1));
    const double m = lp.maxCoeff();
    double z = 0.0;
    for (int c = 0; c < n_classes; ++c) {
      lp[c] = std::exp(lp[c] - m);
      z += lp[c];
    }
    out.row(i) = (lp / z).transpose();
  }
  return out;
}

Eigen::MatrixXd GlmFit::covariance() const {
  const Eigen::Index p = beta.size();
  const Eigen::Index k = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(p, p);
  if (k == 0) return inv;
  const Eigen::MatrixXd L = xtx_chol_L.topLeftCorner(k, k);
  Eigen::MatrixXd small =
      L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
  small = L.transpose().triangularView<Eigen::Upper>().solve(small);
  const double scale = family == Family::gaussian ? sigma2 : 1.0;
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      inv(kept[static_cast<std::size_t>(a)], kept[static_cast<std::size_t>(b)]) =
          scale * small(a, b);
  return inv;
}

GlmFit fit_ols(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
               const Eigen::VectorXd& y, Collinear policy) {
  if (X.rows() != y.size()) throw std::invalid_argument("fit_ols: size mismatch");
  auto [kept, dropped] = rank_screen(X, names);
  if (!dropped.empty() && policy == Collinear::error) throw RankError(dropped);
  const Eigen::Index k = static_cast<Eigen::Index>(kept.size());
  if (X.rows() <= k) throw std::invalid_argument("fit_ols: n <= p");

  Eigen::MatrixXd Xk(X.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) Xk.col(j) = X.col(kept[static_cast<std::size_t>(j)]);

  const Eigen::MatrixXd G = Xk.transpose() * Xk;
  const Eigen::LLT<Eigen::MatrixXd> llt(G);
  const Eigen::VectorXd bk = llt.solve(Xk.transpose() * y);

  GlmFit fit;
  fit.family = Family::gaussian;
  fit.beta = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index j = 0; j < k; ++j) fit.beta[kept[static_cast<std::size_t>(j)]] = bk[j];
  fit.dropped = dropped;
  fit.kept = kept;
  fit.n = X.rows();
  const Eigen::VectorXd resid = y - Xk * bk;
  fit.rss = resid.squaredNorm();
  fit.sigma2 = fit.rss / static_cast<double>(X.rows() - k);
  fit.xtx_chol_L = llt.matrixL();
  fit.iterations = 1;
  return fit;
}

GlmFit fit_logistic(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                    const Eigen::VectorXd& y, int max_iter, double tol,
                    Collinear policy, const Eigen::VectorXd* offset) {
  if (X.rows() != y.size())
    throw std::invalid_argument("fit_logistic: size mismatch");
  // fractional responses in [0,1] are allowed: the fluctuation step fits a
  // quasi-binomial model to the scaled outcome
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!(y[i] >= 0.0 && y[i] <= 1.0))
      throw std::invalid_argument("fit_logistic: y outside [0,1]");

  auto [kept, dropped] = rank_screen(X, names);
  if (!dropped.empty() && policy == Collinear::error) throw RankError(dropped);
  const Eigen::Index k = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd Xk(X.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) Xk.col(j) = X.col(kept[static_cast<std::size_t>(j)]);

  Eigen::VectorXd bk = Eigen::VectorXd::Zero(k);
  GlmFit fit;
  fit.family = Family::binomial;
  fit.dropped = dropped;
  fit.kept = kept;
  fit.n = X.rows();
  fit.converged = false;

  Eigen::VectorXd lp = offset ? *offset : Eigen::VectorXd::Zero(X.rows());
  double nll = binom_nll(lp, y);
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const Eigen::VectorXd p = expit_vec(lp);
    const Eigen::VectorXd score = Xk.transpose() * (y - p);
    Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-12).matrix();
    Eigen::MatrixXd H = Xk.transpose() * w.asDiagonal() * Xk;
    H.diagonal().array() += 1e-12;
    llt.compute(H);
    const Eigen::VectorXd delta = llt.solve(score);
    // under separation the score vanishes while the Newton step stays O(1);
    // convergence requires both to be small
    if (score.lpNorm<Eigen::Infinity>() < tol &&
        delta.lpNorm<Eigen::Infinity>() < 1e-3) {
      fit.converged = true;
      break;
    }

    // step halving with the separation cap applied inside the trial step
    double step = 1.0;
    bool improved = false;
    for (int h = 0; h < 20; ++h, step *= 0.5) {
      Eigen::VectorXd trial = bk + step * delta;
      for (Eigen::Index j = 0; j < k; ++j)
        trial[j] = std::clamp(trial[j], -kBetaCap, kBetaCap);
      Eigen::VectorXd lp_trial = Xk * trial;
      if (offset) lp_trial += *offset;
      const double nll_trial = binom_nll(lp_trial, y);
      if (nll_trial <= nll + 1e-12 * (1.0 + std::fabs(nll))) {
        const double moved = (trial - bk).lpNorm<Eigen::Infinity>();
        bk = trial;
        lp = lp_trial;
        nll = nll_trial;
        improved = moved > 1e-12;
        break;
      }
    }
    if (!improved) break;  // pinned at the cap or at numerical resolution
  }
  for (Eigen::Index j = 0; j < k; ++j)
    if (std::fabs(bk[j]) >= kBetaCap - 1e-9) fit.capped = true;

  // weighted Gram at the solution, for covariance() and posterior-style draws
  {
    const Eigen::VectorXd p = expit_vec(lp);
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).max(1e-12).matrix();
    Eigen::MatrixXd H = Xk.transpose() * w.asDiagonal() * Xk;
    H.diagonal().array() += 1e-12;
    llt.compute(H);
    fit.xtx_chol_L = llt.matrixL();
  }

  fit.beta = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index j = 0; j < k; ++j) fit.beta[kept[static_cast<std::size_t>(j)]] = bk[j];
  if (fit.capped) fit.converged = false;
  return fit;
}

GlmFit fit_multinomial(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                       const std::vector<int>& y, int n_classes, int max_iter,
                       double tol, Collinear policy) {
  if (n_classes < 2) throw std::invalid_argument("fit_multinomial: k < 2");
  if (X.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("fit_multinomial: size mismatch");
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (int c : y) {
    if (c < 0 || c >= n_classes)
      throw std::invalid_argument("fit_multinomial: class code out of range");
    counts[static_cast<std::size_t>(c)]++;
  }
  for (int c = 0; c < n_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("fit_multinomial: class " + std::to_string(c) +
                                  " unobserved");

  auto [kept, dropped] = rank_screen(X, names);
  if (!dropped.empty() && policy == Collinear::error) throw RankError(dropped);
  const Eigen::Index k = static_cast<Eigen::Index>(kept.size());
  const int kc = n_classes - 1;
  Eigen::MatrixXd Xk(X.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) Xk.col(j) = X.col(kept[static_cast<std::size_t>(j)]);
  const Eigen::Index n = X.rows();

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(kc, k);
  GlmFit fit;
  fit.family = Family::multinomial;
  fit.n_classes = n_classes;
  fit.dropped = dropped;
  fit.kept = kept;
  fit.n = n;
  fit.converged = false;

  auto probs = [&](const Eigen::MatrixXd& Bcur) {
    Eigen::MatrixXd P(n, n_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = 0.0;
      Eigen::VectorXd lp(n_classes);
      lp[0] = 0.0;
      for (int c = 0; c < kc; ++c) {
        lp[c + 1] = Xk.row(i).dot(Bcur.row(c));
        m = std::max(m, lp[c + 1]);
      }
      double z = 0.0;
      for (int c = 0; c < n_classes; ++c) {
        lp[c] = std::exp(lp[c] - m);
        z += lp[c];
      }
      P.row(i) = (lp / z).transpose();
    }
    return P;
  };
  auto nll_of = [&](const Eigen::MatrixXd& P) {
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      nll -= std::log(std::max(P(i, y[static_cast<std::size_t>(i)]), 1e-300));
    return nll;
  };

  Eigen::MatrixXd P = probs(B);
  double nll = nll_of(P);
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    // stacked gradient and hessian over (kc*k) parameters
    Eigen::VectorXd g(kc * k);
    for (int c = 0; c < kc; ++c) {
      Eigen::VectorXd ind(n);
      for (Eigen::Index i = 0; i < n; ++i)
        ind[i] = (y[static_cast<std::size_t>(i)] == c + 1) ? 1.0 : 0.0;
      g.segment(c * k, k) = Xk.transpose() * (ind - P.col(c + 1));
    }
    Eigen::MatrixXd H(kc * k, kc * k);
    for (int a = 0; a < kc; ++a)
      for (int b = 0; b < kc; ++b) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double pa = P(i, a + 1), pb = P(i, b + 1);
          w[i] = a == b ? pa * (1.0 - pa) : -pa * pb;
        }
        H.block(a * k, b * k, k, k) = Xk.transpose() * w.asDiagonal() * Xk;
      }
    H.diagonal().array() += 1e-10;
    const Eigen::VectorXd delta = H.ldlt().solve(g);
    if (g.lpNorm<Eigen::Infinity>() < tol &&
        delta.lpNorm<Eigen::Infinity>() < 1e-3) {
      fit.converged = true;
      break;
    }

    double step = 1.0;
    bool improved = false;
    for (int h = 0; h < 20; ++h, step *= 0.5) {
      Eigen::MatrixXd Bt = B;
      for (int c = 0; c < kc; ++c)
        for (Eigen::Index j = 0; j < k; ++j)
          Bt(c, j) = std::clamp(B(c, j) + step * delta[c * k + j], -kBetaCap, kBetaCap);
      const Eigen::MatrixXd Pt = probs(Bt);
      const double nll_t = nll_of(Pt);
      if (nll_t <= nll + 1e-12 * (1.0 + std::fabs(nll))) {
        const double moved = (Bt - B).cwiseAbs().maxCoeff();
        B = Bt;
        P = Pt;
        nll = nll_t;
        improved = moved > 1e-12;
        break;
      }
    }
    if (!improved) break;
  }
  if (B.size() > 0 && B.cwiseAbs().maxCoeff() >= kBetaCap - 1e-9) fit.capped = true;

  fit.beta_mat = Eigen::MatrixXd::Zero(kc, X.cols());
  for (int c = 0; c < kc; ++c)
    for (Eigen::Index j = 0; j < k; ++j)
      fit.beta_mat(c, kept[static_cast<std::size_t>(j)]) = B(c, j);
  if (fit.capped) fit.converged = false;
  return fit;
}

BayesLinearDraw draw_bayes_coefficients(const GlmFit& fit, RngStream& rng) {
  if (fit.family != Family::gaussian)
    throw std::invalid_argument("draw_bayes_coefficients: gaussian fit required");
  const Eigen::Index k = static_cast<Eigen::Index>(fit.kept.size());
  const double df = static_cast<double>(fit.n - k);
  double sigma2_star = 0.0;
  if (fit.rss > 0.0 && df > 0.0) sigma2_star = fit.rss / rng.chi_squared(df);

  Eigen::VectorXd z(k);
  for (Eigen::Index j = 0; j < k; ++j) z[j] = rng.normal();
  // beta* = beta + sigma* L^-T z with L L^T = X'X
  Eigen::VectorXd u = fit.xtx_chol_L.topLeftCorner(k, k)
                          .transpose()
                          .triangularView<Eigen::Upper>()
                          .solve(z);
  Eigen::VectorXd beta = fit.beta;
  const double sigma_star = std::sqrt(sigma2_star);
  for (Eigen::Index j = 0; j < k; ++j)
    beta[fit.kept[static_cast<std::size_t>(j)]] += sigma_star * u[j];
  return {beta, sigma2_star};
}

Eigen::VectorXd draw_bayes_linear(const GlmFit& fit, const Eigen::MatrixXd& X_new,
                                  RngStream& rng) {
  const BayesLinearDraw d = draw_bayes_coefficients(fit, rng);
  Eigen::VectorXd out = X_new * d.beta;
  const double sigma = std::sqrt(d.sigma2);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, sigma);
  return out;
}

Eigen::VectorXd nnls_weights(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const Eigen::Index p = A.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  std::vector<bool> passive(static_cast<std::size_t>(p), false);
  const double tol = 1e-10 * A.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff();

  for (int outer = 0; outer < 4 * static_cast<int>(p) + 8; ++outer) {
    const Eigen::VectorXd w = A.transpose() * (b - A * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < p; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (;;) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index j = 0; j < p; ++j)
        if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
      Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) Ap.col(static_cast<Eigen::Index>(j)) = A.col(idx[j]);
      Eigen::VectorXd s =
          (Ap.transpose() * Ap + 1e-12 * Eigen::MatrixXd::Identity(
                                              static_cast<Eigen::Index>(idx.size()),
                                              static_cast<Eigen::Index>(idx.size())))
              .ldlt()
              .solve(Ap.transpose() * b);
      if (idx.empty() || s.minCoeff() > 0.0) {
        x.setZero();
        for (std::size_t j = 0; j < idx.size(); ++j) x[idx[j]] = s[static_cast<Eigen::Index>(j)];
        break;
      }
      double alpha = 1.0;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double sj = s[static_cast<Eigen::Index>(j)];
        const double xj = x[idx[j]];
        if (sj <= 0.0 && xj - sj > 0.0) alpha = std::min(alpha, xj / (xj - sj));
      }
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const Eigen::Index jj = idx[j];
        x[jj] += alpha * (s[static_cast<Eigen::Index>(j)] - x[jj]);
        if (x[jj] <= 1e-14) {
          x[jj] = 0.0;
          passive[static_cast<std::size_t>(jj)] = false;
        }
      }
    }
  }

  const double total = x.sum();
  if (total <= 0.0) return Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
  return x / total;
}

}  // namespace mdt
