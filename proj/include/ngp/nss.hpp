#pragma once

#include "ngp/kernels.hpp"
#include "ngp/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

// Nested smoothing spline: the minimizer of
//
//   1/J sum_j {Y_j - U(t_j)}^2 + lambda_U int (D^m U - A)^2 + lambda_A int (D^n A)^2
//
// has the finite-dimensional form (Theorem 2 / Corollary 1)
//
//   U^(t) = mu' phi_mu(t) + nu' R_U~(t) + alpha' phi_alpha(t) + beta' R_A~(t),
//
// with phi_mu = (phi_0..phi_{m-1}), phi_alpha = (phi_m..phi_{m+n-1}),
// R_U~ the order-m and R_A~ the order-(m+n) reproducing kernels.  With
// S = R_U~ + J lambda_U I + (lambda_U/lambda_A) R_A~ the coefficients are
//
//   mu    = Sigma_{mu|alpha}^{-1} phi_{mu|alpha} S^{-1} Y
//   alpha = Sigma_{alpha|mu}^{-1} phi_{alpha|mu} S^{-1} Y
//   nu    = S^{-1} (Y - phi_mu mu - phi_alpha alpha),   beta = (lambda_U/lambda_A) nu,
//
// where Sigma_{xy} = phi_x' S^{-1} phi_y and the conditioned quantities are the
// usual Schur complements.  Everything is dense; S is factorized once per fit.

namespace ngp::nss {

struct NssConfig {
  int m = 2;
  int n = 1;
  double lambda_U = 1e-3;
  double lambda_A = 1e-3;
  std::size_t dense_cap = 2000;

  void validate() const {
    if (m < 2) throw ValidationError("nss: order m must be >= 2");
    if (n < 1) throw ValidationError("nss: order n must be >= 1");
    if (!std::isfinite(lambda_U) || !(lambda_U > 0.0) || !std::isfinite(lambda_A) ||
        !(lambda_A > 0.0))
      throw ValidationError("nss: smoothing parameters must be positive and finite");
  }
};

struct NssFit {
  Eigen::VectorXd mu;      // m
  Eigen::VectorXd nu;      // J
  Eigen::VectorXd alpha;   // n
  Eigen::VectorXd beta;    // J
  Eigen::VectorXd fitted;  // J
};

// Theorem 5 equivalence mapping between GP variances and penalties:
// J lambda_U = sigma2_eps / sigma2_U, J lambda_A = sigma2_eps / sigma2_A.
inline std::pair<double, double> lambdas_from_variances(double sigma2_eps,
                                                        double sigma2_U,
                                                        double sigma2_A,
                                                        std::size_t J) {
  if (J == 0) throw ValidationError("lambdas_from_variances: J must be positive");
  return {sigma2_eps / (double(J) * sigma2_U), sigma2_eps / (double(J) * sigma2_A)};
}

namespace detail {

struct DesignBlocks {
  Eigen::MatrixXd phi_mu;  // J x m
  Eigen::MatrixXd phi_al;  // J x n
  Eigen::MatrixXd r_u;     // J x J, order m
  Eigen::MatrixXd r_a;     // J x J, order m+n
};

inline DesignBlocks build_design(const std::vector<double>& tt, const NssConfig& cfg) {
  const std::size_t J = tt.size();
  DesignBlocks d;
  d.phi_mu.resize(J, cfg.m);
  d.phi_al.resize(J, cfg.n);
  for (std::size_t j = 0; j < J; ++j) {
    for (int i = 0; i < cfg.m; ++i) d.phi_mu(j, i) = kernels::poly_basis(i, tt[j]);
    for (int i = 0; i < cfg.n; ++i)
      d.phi_al(j, i) = kernels::poly_basis(cfg.m + i, tt[j]);
  }
  d.r_u.resize(J, J);
  d.r_a.resize(J, J);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      d.r_u(i, j) = d.r_u(j, i) = kernels::reproducing_kernel(cfg.m, tt[i], tt[j]);
      d.r_a(i, j) = d.r_a(j, i) =
          kernels::reproducing_kernel(cfg.m + cfg.n, tt[i], tt[j]);
    }
  return d;
}

struct Solved {
  DesignBlocks design;
  Eigen::LDLT<Eigen::MatrixXd> s_ldlt;
  Eigen::MatrixXd sig_mu_al_inv;  // Sigma_{mu|alpha}^{-1}
  Eigen::MatrixXd sig_al_mu_inv;  // Sigma_{alpha|mu}^{-1}
  Eigen::MatrixXd phi_mu_al;      // m x J
  Eigen::MatrixXd phi_al_mu;      // n x J
};

inline Eigen::MatrixXd robust_inverse(const Eigen::MatrixXd& a, const char* what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw NumericalError(std::string("nss: singular ") + what +
                         " (design not identifiable; need J >= m+n distinct times)");
  return lu.inverse();
}

inline Solved solve_blocks(const std::vector<double>& tt, const NssConfig& cfg) {
  const std::size_t J = tt.size();
  Solved s{build_design(tt, cfg), {}, {}, {}, {}, {}};
  const double ratio = cfg.lambda_U / cfg.lambda_A;

  Eigen::MatrixXd S = s.design.r_u + ratio * s.design.r_a;
  S.diagonal().array() += double(J) * cfg.lambda_U;
  s.s_ldlt.compute(S);
  if (s.s_ldlt.info() != Eigen::Success)
    throw NumericalError("nss: factorization of S failed");

  const Eigen::MatrixXd si_phi_mu = s.s_ldlt.solve(s.design.phi_mu);  // J x m
  const Eigen::MatrixXd si_phi_al = s.s_ldlt.solve(s.design.phi_al);  // J x n
  const Eigen::MatrixXd sig_mm = s.design.phi_mu.transpose() * si_phi_mu;
  const Eigen::MatrixXd sig_ma = s.design.phi_mu.transpose() * si_phi_al;
  const Eigen::MatrixXd sig_aa = s.design.phi_al.transpose() * si_phi_al;

  const Eigen::MatrixXd sig_aa_inv = robust_inverse(sig_aa, "Sigma_alpha_alpha");
  const Eigen::MatrixXd sig_mm_inv = robust_inverse(sig_mm, "Sigma_mu_mu");

  s.phi_mu_al = s.design.phi_mu.transpose() -
                sig_ma * sig_aa_inv * s.design.phi_al.transpose();
  s.phi_al_mu = s.design.phi_al.transpose() -
                sig_ma.transpose() * sig_mm_inv * s.design.phi_mu.transpose();
  const Eigen::MatrixXd sig_mu_al = sig_mm - sig_ma * sig_aa_inv * sig_ma.transpose();
  const Eigen::MatrixXd sig_al_mu = sig_aa - sig_ma.transpose() * sig_mm_inv * sig_ma;
  s.sig_mu_al_inv = robust_inverse(sig_mu_al, "Sigma_mu|alpha");
  s.sig_al_mu_inv = robust_inverse(sig_al_mu, "Sigma_alpha|mu");
  return s;
}

}  // namespace detail

inline std::vector<double> evaluate_nss(const NssFit& fit, const TimeSeries& series,
                                        const NssConfig& cfg,
                                        const std::vector<double>& eval_times);

inline NssFit fit_nss(const TimeSeries& series, const NssConfig& cfg) {
  series.validate();
  cfg.validate();
  const std::size_t J = series.size();
  if (J > cfg.dense_cap)
    throw ValidationError("fit_nss: J exceeds dense-solve cap");
  if (J < std::size_t(cfg.m + cfg.n))
    throw ValidationError("fit_nss: need at least m + n observations");

  const std::vector<double> tt = shifted_times(series.t);
  const detail::Solved s = detail::solve_blocks(tt, cfg);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(series.y.data(), J);
  const Eigen::VectorXd siy = s.s_ldlt.solve(y);

  NssFit fit;
  fit.mu = s.sig_mu_al_inv * (s.phi_mu_al * siy);
  fit.alpha = s.sig_al_mu_inv * (s.phi_al_mu * siy);
  fit.nu = s.s_ldlt.solve(y - s.design.phi_mu * fit.mu - s.design.phi_al * fit.alpha);
  fit.beta = (cfg.lambda_U / cfg.lambda_A) * fit.nu;
  // Fitted values through the same basis expansion the evaluator uses, so
  // evaluating at the knots reproduces them exactly.
  const std::vector<double> at_knots = evaluate_nss(fit, series, cfg, series.t);
  fit.fitted = Eigen::Map<const Eigen::VectorXd>(at_knots.data(), J);
  return fit;
}

inline std::vector<double> evaluate_nss(const NssFit& fit, const TimeSeries& series,
                                        const NssConfig& cfg,
                                        const std::vector<double>& eval_times) {
  series.validate();
  cfg.validate();
  const std::size_t J = series.size();
  if (fit.nu.size() != Eigen::Index(J) || fit.beta.size() != Eigen::Index(J) ||
      fit.mu.size() != cfg.m || fit.alpha.size() != cfg.n)
    throw ValidationError("evaluate_nss: fit does not match series/config");

  const double shift = origin_shift(series.t);
  std::vector<double> out(eval_times.size());
  for (std::size_t e = 0; e < eval_times.size(); ++e) {
    const double t = eval_times[e] - shift;
    if (!std::isfinite(t) || t < 0.0)
      throw ValidationError("evaluate_nss: eval time precedes process origin");
    double v = 0.0;
    for (int i = 0; i < cfg.m; ++i) v += fit.mu(i) * kernels::poly_basis(i, t);
    for (int i = 0; i < cfg.n; ++i)
      v += fit.alpha(i) * kernels::poly_basis(cfg.m + i, t);
    for (std::size_t j = 0; j < J; ++j) {
      const double tj = series.t[j] - shift;
      v += fit.nu(j) * kernels::reproducing_kernel(cfg.m, tj, t);
      v += fit.beta(j) * kernels::reproducing_kernel(cfg.m + cfg.n, tj, t);
    }
    out[e] = v;
  }
  return out;
}

// Corollary 3: the fitted values are K Y with
//   K = phi_mu B_mu + R_U~ B_nu + phi_alpha B_alpha + R_A~ B_beta,
//   B_mu = Sigma_{mu|alpha}^{-1} phi_{mu|alpha} S^{-1},  B_beta = ratio B_nu,
//   B_nu = S^{-1} (I - phi_mu B_mu - phi_alpha B_alpha).
inline Eigen::MatrixXd hat_matrix(const TimeSeries& series, const NssConfig& cfg) {
  series.validate();
  cfg.validate();
  const std::size_t J = series.size();
  if (J > cfg.dense_cap) throw ValidationError("hat_matrix: J exceeds dense-solve cap");
  if (J < std::size_t(cfg.m + cfg.n))
    throw ValidationError("hat_matrix: need at least m + n observations");

  const std::vector<double> tt = shifted_times(series.t);
  const detail::Solved s = detail::solve_blocks(tt, cfg);

  // phi_{x|y} S^{-1} = (S^{-1} phi_{x|y}')' because S is symmetric.
  const Eigen::MatrixXd b_mu =
      s.sig_mu_al_inv * s.s_ldlt.solve(s.phi_mu_al.transpose()).transpose();
  const Eigen::MatrixXd b_al =
      s.sig_al_mu_inv * s.s_ldlt.solve(s.phi_al_mu.transpose()).transpose();
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(J, J) -
                          s.design.phi_mu * b_mu - s.design.phi_al * b_al;
  const Eigen::MatrixXd b_nu = s.s_ldlt.solve(inner);
  const double ratio = cfg.lambda_U / cfg.lambda_A;
  return s.design.phi_mu * b_mu + s.design.r_u * b_nu + s.design.phi_al * b_al +
         ratio * (s.design.r_a * b_nu);
}

}  // namespace ngp::nss
