#pragma once

#include "ngp/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

// Covariance structure of the nested Gaussian process
//
//   D^m U(t) = A(t) + sigma_U dW_U,   D^n A(t) = sigma_A dW_A,
//
// with independent N(0, sigma2_mu) initial values on U's first m derivatives
// and N(0, sigma2_alpha) on A's first n.  U decomposes into polynomial parts
// spanned by phi_i(t) = t^i/i! plus integrated-Wiener parts with reproducing
// kernels R_m and R_{m+n}, giving
//
//   Cov{U(s),U(t)} = sigma2_mu    * sum_{i<m} phi_i(s)phi_i(t)
//                  + sigma2_U     * R_m(s,t)
//                  + sigma2_alpha * sum_{i<n} phi_{m+i}(s)phi_{m+i}(t)
//                  + sigma2_A     * R_{m+n}(s,t).

namespace ngp::kernels {

struct KernelParams {
  int m = 2;  // order of the U equation (m >= 2)
  int n = 1;  // order of the A equation (n >= 1)
  double sigma2_mu = 1.0;
  double sigma2_U = 1.0;
  double sigma2_alpha = 1.0;
  double sigma2_A = 1.0;

  // The initial-value variances may be zero (pinned start); the process
  // noise variances must be positive or the prior degenerates.
  void validate() const {
    if (m < 2) throw ValidationError("kernel order m must be >= 2");
    if (n < 1) throw ValidationError("kernel order n must be >= 1");
    for (double v : {sigma2_mu, sigma2_alpha})
      if (!std::isfinite(v) || v < 0.0)
        throw ValidationError("initial-value variances must be >= 0 and finite");
    for (double v : {sigma2_U, sigma2_A})
      if (!std::isfinite(v) || !(v > 0.0))
        throw ValidationError("process noise variances must be positive and finite");
  }
};

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// phi_i(t) = t^i / i!   (Scalar widens the dense-oracle path to long double;
// everything else instantiates the double default.)
template <class Scalar = double>
inline Scalar poly_basis(int i, Scalar t) {
  if (i < 0) throw ValidationError("poly_basis: order must be >= 0");
  Scalar p = 1.0;
  for (int k = 0; k < i; ++k) p *= t;
  return p / Scalar(factorial(i));
}

// Green's function of D^order: G(s,u) = (s-u)_+^{order-1} / (order-1)!
template <class Scalar = double>
inline Scalar green_kernel(int order, Scalar s, Scalar u) {
  if (order < 1) throw ValidationError("green_kernel: order must be >= 1");
  if (u >= s) return Scalar(0);
  Scalar p = 1.0;
  for (int k = 0; k < order - 1; ++k) p *= (s - u);
  return p / Scalar(factorial(order - 1));
}

// R(s,t) = int_0^{min(s,t)} G(s,u) G(t,u) du, in closed form by binomial
// expansion of (s-u)^{p}(t-u)^{p} with p = order-1:
//   sum_{i,j} C(p,i)C(p,j)(-1)^{i+j} s^{p-i} t^{p-j} r^{i+j+1}/(i+j+1),
// all divided by (p!)^2, where r = min(s,t).
template <class Scalar = double>
inline Scalar reproducing_kernel(int order, Scalar s, Scalar t) {
  // Stack tables keep the J^2 Gram loops allocation-free; order 32 is far
  // beyond anything factorial arithmetic survives in double anyway.
  constexpr int kMaxOrder = 32;
  if (order < 1) throw ValidationError("reproducing_kernel: order must be >= 1");
  if (order > kMaxOrder)
    throw ValidationError("reproducing_kernel: order exceeds closed-form limit");
  if (s < Scalar(0) || t < Scalar(0))
    throw ValidationError("reproducing_kernel: arguments must be >= 0");
  const Scalar r = std::min(s, t);
  if (r <= Scalar(0)) return Scalar(0);
  const int p = order - 1;

  Scalar binom[kMaxOrder];
  binom[0] = 1.0;
  for (int i = 1; i <= p; ++i) binom[i] = binom[i - 1] * Scalar(p - i + 1) / Scalar(i);

  // s^{p-i}, t^{p-j}, r^{i+j+1} tables
  Scalar sp[kMaxOrder], tp[kMaxOrder], rp[2 * kMaxOrder];
  sp[0] = tp[0] = rp[0] = 1.0;
  for (int k = 1; k <= p; ++k) {
    sp[k] = sp[k - 1] * s;
    tp[k] = tp[k - 1] * t;
  }
  for (int k = 1; k <= 2 * p + 1; ++k) rp[k] = rp[k - 1] * r;

  Scalar acc = 0.0;
  for (int i = 0; i <= p; ++i) {
    for (int j = 0; j <= p; ++j) {
      const Scalar sign = ((i + j) % 2 == 0) ? Scalar(1) : Scalar(-1);
      acc += sign * binom[i] * binom[j] * sp[p - i] * tp[p - j] * rp[i + j + 1] /
             Scalar(i + j + 1);
    }
  }
  const Scalar fp = Scalar(factorial(p));
  return acc / (fp * fp);
}

template <class Scalar = double>
inline Scalar covariance_U(Scalar s, Scalar t, const KernelParams& kp) {
  kp.validate();
  if (s < Scalar(0) || t < Scalar(0))
    throw ValidationError("covariance_U: arguments must be >= 0");
  Scalar poly_u = 0.0;
  for (int i = 0; i < kp.m; ++i) poly_u += poly_basis(i, s) * poly_basis(i, t);
  Scalar poly_a = 0.0;
  for (int i = 0; i < kp.n; ++i)
    poly_a += poly_basis(kp.m + i, s) * poly_basis(kp.m + i, t);
  return Scalar(kp.sigma2_mu) * poly_u +
         Scalar(kp.sigma2_U) * reproducing_kernel(kp.m, s, t) +
         Scalar(kp.sigma2_alpha) * poly_a +
         Scalar(kp.sigma2_A) * reproducing_kernel(kp.m + kp.n, s, t);
}

struct GpPosterior {
  std::vector<double> mean;
  std::vector<double> var;
};

// Brute-force GP regression posterior for U given y = U(t) + eps:
//   E[U(e)|y]   = K_et (K_tt + sigma2_eps I)^{-1} y
//   Var[U(e)|y] = K_ee - k_e' (K_tt + sigma2_eps I)^{-1} k_e
// O(J^3); the reference implementation the O(J) filter is tested against.
inline GpPosterior gp_posterior_oracle(const TimeSeries& series,
                                       const KernelParams& kp, double sigma2_eps,
                                       const std::vector<double>& eval_times,
                                       std::size_t dense_cap = 2000) {
  series.validate();
  kp.validate();
  if (!std::isfinite(sigma2_eps) || !(sigma2_eps > 0.0))
    throw ValidationError("gp_posterior_oracle: sigma2_eps must be positive");
  const std::size_t J = series.size();
  if (J > dense_cap)
    throw ValidationError("gp_posterior_oracle: J = " + std::to_string(J) +
                          " exceeds dense-solve cap " + std::to_string(dense_cap));

  const double shift = origin_shift(series.t);
  std::vector<double> tt(J);
  for (std::size_t j = 0; j < J; ++j) tt[j] = series.t[j] - shift;
  std::vector<double> ee(eval_times.size());
  for (std::size_t j = 0; j < eval_times.size(); ++j) {
    if (!std::isfinite(eval_times[j]))
      throw ValidationError("gp_posterior_oracle: non-finite eval time");
    ee[j] = eval_times[j] - shift;
    if (ee[j] < 0.0)
      throw ValidationError("gp_posterior_oracle: eval time precedes process origin");
  }

  // The kernel grows like t^5, so K + sigma2_eps I picks up a condition
  // number around (t_max)^5 / sigma2_eps and a double-precision dense solve
  // keeps only ~eps*kappa accuracy.  The filter it anchors is sequential and
  // much better conditioned, so the reference must out-resolve it: entries
  // and solve are carried in long double and rounded once on output.
  using ScalarL = long double;
  using MatrixL = Eigen::Matrix<ScalarL, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorL = Eigen::Matrix<ScalarL, Eigen::Dynamic, 1>;

  MatrixL A(J, J);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const ScalarL k = covariance_U<ScalarL>(tt[i], tt[j], kp);
      A(i, j) = k;
      A(j, i) = k;
    }
  A.diagonal().array() += ScalarL(sigma2_eps);

  Eigen::LLT<MatrixL> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError(
        "gp_posterior_oracle: K + sigma2_eps I is not positive definite "
        "(ill-conditioned kernel matrix)");

  VectorL y(J);
  for (std::size_t j = 0; j < J; ++j) y(j) = ScalarL(series.y[j]);
  const VectorL alpha = llt.solve(y);

  GpPosterior out;
  out.mean.resize(ee.size());
  out.var.resize(ee.size());
  VectorL k_e(J);
  for (std::size_t e = 0; e < ee.size(); ++e) {
    for (std::size_t j = 0; j < J; ++j)
      k_e(j) = covariance_U<ScalarL>(ee[e], tt[j], kp);
    out.mean[e] = double(k_e.dot(alpha));
    out.var[e] = double(covariance_U<ScalarL>(ee[e], ee[e], kp) -
                        k_e.dot(llt.solve(k_e)));
  }
  return out;
}

}  // namespace ngp::kernels
