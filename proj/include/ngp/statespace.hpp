#pragma once

#include "ngp/kernels.hpp"
#include "ngp/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

// Markov representations of the (m=2, n=1) nGP over the state
// theta = (U, D^1 U, A).  Exact discretization (Proposition 1):
//
//   theta_{j+1} = G_j theta_j + w_j,  w_j ~ N_3(0, W_j),
//   G_j = exp(C delta_j) = [[1, d, d^2/2], [0, 1, d], [0, 0, 1]],
//   W_j = [[d^3/3 sU + d^5/20 sA,  d^2/2 sU + d^4/8 sA,  d^3/6 sA],
//          [      \"            ,  d  sU   + d^3/3 sA,  d^2/2 sA],
//          [      \"            ,        \"           ,  d    sA]]
//
// with d = delta_j, sU = sigma2_U, sA = sigma2_A.  Euler approximation
// (Proposition 2) keeps the bidiagonal G and lifts a 2-d disturbance through
// H = [[0,0],[1,0],[0,1]] with W~ = diag(sU d, sA d).

namespace ngp::statespace {

struct StateVector {
  double u = 0.0;
  double du = 0.0;
  double a = 0.0;
};

struct TransitionStep {
  double delta = 0.0;
  Mat3 g = Mat3::Identity();
  Mat3 w = Mat3::Zero();
};

struct ApproxTransitionStep {
  double delta = 0.0;
  Mat3 g_tilde = Mat3::Identity();
  Eigen::Matrix<double, 3, 2> h_tilde = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::Matrix2d w_tilde = Eigen::Matrix2d::Zero();
};

// Zero is admitted so degenerate single-channel transitions can be formed
// (e.g. isolating the sigma2_U or sigma2_A contribution to W).
inline void check_noise_variances(double sigma2_U, double sigma2_A) {
  if (!std::isfinite(sigma2_U) || sigma2_U < 0.0 || !std::isfinite(sigma2_A) ||
      sigma2_A < 0.0)
    throw ValidationError("process variances must be >= 0 and finite");
}

inline TransitionStep exact_transition(double delta, double sigma2_U,
                                       double sigma2_A) {
  if (!std::isfinite(delta) || delta < 0.0)
    throw ValidationError("exact_transition: delta must be >= 0");
  check_noise_variances(sigma2_U, sigma2_A);
  TransitionStep s;
  s.delta = delta;
  const double d = delta, d2 = d * d, d3 = d2 * d, d4 = d3 * d, d5 = d4 * d;
  s.g << 1.0, d, d2 / 2.0,
         0.0, 1.0, d,
         0.0, 0.0, 1.0;
  s.w(0, 0) = d3 / 3.0 * sigma2_U + d5 / 20.0 * sigma2_A;
  s.w(0, 1) = d2 / 2.0 * sigma2_U + d4 / 8.0 * sigma2_A;
  s.w(0, 2) = d3 / 6.0 * sigma2_A;
  s.w(1, 1) = d * sigma2_U + d3 / 3.0 * sigma2_A;
  s.w(1, 2) = d2 / 2.0 * sigma2_A;
  s.w(2, 2) = d * sigma2_A;
  s.w(1, 0) = s.w(0, 1);
  s.w(2, 0) = s.w(0, 2);
  s.w(2, 1) = s.w(1, 2);
  return s;
}

inline ApproxTransitionStep euler_transition(double delta, double sigma2_U,
                                             double sigma2_A) {
  if (!std::isfinite(delta) || !(delta > 0.0))
    throw ValidationError("euler_transition: delta must be > 0");
  check_noise_variances(sigma2_U, sigma2_A);
  ApproxTransitionStep s;
  s.delta = delta;
  s.g_tilde << 1.0, delta, 0.0,
               0.0, 1.0, delta,
               0.0, 0.0, 1.0;
  s.h_tilde(1, 0) = 1.0;
  s.h_tilde(2, 1) = 1.0;
  s.w_tilde(0, 0) = sigma2_U * delta;
  s.w_tilde(1, 1) = sigma2_A * delta;
  return s;
}

// Knot grid plus exact transitions.  knots[0] = 0 is the unobserved anchor
// carrying the initial prior diag(sigma2_mu, sigma2_mu, sigma2_alpha); the
// J observations sit at knots[1..J].
struct ModelSpec {
  std::vector<double> knots;
  std::vector<bool> observed;
  double sigma2_eps = 1.0;
  Vec3 init_var = Vec3::Ones();
  std::vector<TransitionStep> transitions;
  double time_shift = 0.0;  // original time = knot + time_shift
};

inline ModelSpec build_model(const TimeSeries& series,
                             const kernels::KernelParams& kp, double sigma2_eps) {
  series.validate();
  kp.validate();
  if (kp.m != 2 || kp.n != 1)
    throw ValidationError("build_model: unsupported order (m,n) = (" +
                          std::to_string(kp.m) + "," + std::to_string(kp.n) +
                          "); the state-space path implements (2,1) only");
  if (!std::isfinite(sigma2_eps) || !(sigma2_eps > 0.0))
    throw ValidationError("build_model: sigma2_eps must be positive");

  const std::size_t J = series.size();
  ModelSpec m;
  m.time_shift = origin_shift(series.t);
  m.sigma2_eps = sigma2_eps;
  m.init_var = Vec3(kp.sigma2_mu, kp.sigma2_mu, kp.sigma2_alpha);
  m.knots.resize(J + 1);
  m.observed.assign(J + 1, true);
  m.observed[0] = false;
  m.knots[0] = 0.0;
  for (std::size_t j = 0; j < J; ++j) m.knots[j + 1] = series.t[j] - m.time_shift;

  m.transitions.reserve(J);
  for (std::size_t j = 0; j < J; ++j) {
    const double delta = m.knots[j + 1] - m.knots[j];
    if (!(delta > 0.0))
      throw ValidationError("build_model: nonpositive knot gap at index " +
                            std::to_string(j));
    m.transitions.push_back(exact_transition(delta, kp.sigma2_U, kp.sigma2_A));
  }
  return m;
}

}  // namespace ngp::statespace
