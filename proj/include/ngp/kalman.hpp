#pragma once

#include "ngp/statespace.hpp"
#include "ngp/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

// O(J) inference for the discretized nGP: Kalman filter with the
// prediction-error-decomposition log likelihood, the Durbin-Koopman
// fixed-interval smoother (no state-covariance inversions; only the scalar
// innovation variance is divided by), and the Durbin-Koopman (2002)
// mean-correction simulation smoother
//
//   theta~ = theta+ + E[theta | y] - E[theta | y+],
//
// where (theta+, y+) is an unconditional draw from the model.
//
// The engine consumes a generic per-step form (G_j, Q_j, B_j) with
// Q_j = B_j B_j', so the exact model (Q = W) and the Euler model
// (Q = H W~ H') share all of the machinery.

namespace ngp::kalman {

struct EngineStep {
  Mat3 g = Mat3::Identity();
  Mat3 q = Mat3::Zero();        // process noise covariance
  Mat3 noise_b = Mat3::Zero();  // Q = B B'; only the first noise_dim columns used
  int noise_dim = 0;
};

struct EngineModel {
  std::vector<bool> observed;  // per knot, size steps.size() + 1
  double sigma2_eps = 1.0;
  Vec3 init_var = Vec3::Ones();
  std::vector<EngineStep> steps;

  std::size_t n_knots() const { return observed.size(); }
  std::size_t n_obs() const {
    std::size_t k = 0;
    for (bool o : observed) k += o ? 1 : 0;
    return k;
  }
};

// Cholesky factor of a PSD 3x3, retrying once with the documented 1e-15
// diagonal jitter before giving up.
inline bool cholesky_with_jitter(const Mat3& q, Mat3& lower) {
  Eigen::LLT<Mat3> llt(q);
  if (llt.info() == Eigen::Success) {
    lower = llt.matrixL();
    return true;
  }
  Mat3 qj = q + 1e-15 * Mat3::Identity();
  Eigen::LLT<Mat3> llt2(qj);
  if (llt2.info() == Eigen::Success) {
    lower = llt2.matrixL();
    return true;
  }
  return false;
}

inline EngineModel engine_from(const statespace::ModelSpec& model) {
  EngineModel em;
  em.observed = model.observed;
  em.sigma2_eps = model.sigma2_eps;
  em.init_var = model.init_var;
  em.steps.resize(model.transitions.size());
  for (std::size_t j = 0; j < model.transitions.size(); ++j) {
    EngineStep& s = em.steps[j];
    s.g = model.transitions[j].g;
    s.q = model.transitions[j].w;
    if (!cholesky_with_jitter(s.q, s.noise_b))
      throw NumericalError("engine_from: W_j not PSD at step " + std::to_string(j));
    s.noise_dim = 3;
  }
  return em;
}

// Euler-model engine on the same knot grid: Q = H W~ H' is rank 2, so the
// noise factor is built directly from H and sqrt(W~) instead of a Cholesky.
inline EngineModel engine_euler(const statespace::ModelSpec& grid, double sigma2_U,
                                double sigma2_A) {
  EngineModel em;
  em.observed = grid.observed;
  em.sigma2_eps = grid.sigma2_eps;
  em.init_var = grid.init_var;
  em.steps.resize(grid.transitions.size());
  for (std::size_t j = 0; j < grid.transitions.size(); ++j) {
    const auto ap = statespace::euler_transition(grid.transitions[j].delta,
                                                 sigma2_U, sigma2_A);
    EngineStep& s = em.steps[j];
    s.g = ap.g_tilde;
    s.q.setZero();
    s.q(1, 1) = ap.w_tilde(0, 0);
    s.q(2, 2) = ap.w_tilde(1, 1);
    s.noise_b.setZero();
    s.noise_b(1, 0) = std::sqrt(ap.w_tilde(0, 0));
    s.noise_b(2, 1) = std::sqrt(ap.w_tilde(1, 1));
    s.noise_dim = 2;
  }
  return em;
}

// Everything the forward pass produces, kept per knot so the backward
// recursions can run without refiltering.  Reused across MCMC iterations to
// avoid allocation churn.
struct FilterPass {
  std::vector<Vec3> a_pred, a_filt;
  std::vector<Mat3> p_pred, p_filt;
  std::vector<double> innovation;      // valid where observed
  std::vector<double> innovation_var;  // valid where observed
  double log_likelihood = 0.0;

  void resize(std::size_t n_knots) {
    a_pred.resize(n_knots);
    a_filt.resize(n_knots);
    p_pred.resize(n_knots);
    p_filt.resize(n_knots);
    innovation.assign(n_knots, 0.0);
    innovation_var.assign(n_knots, 0.0);
  }
};

inline void symmetrize(Mat3& m) { m = 0.5 * (m + m.transpose()).eval(); }

inline void run_filter(const EngineModel& em, const std::vector<double>& y,
                       FilterPass& pass) {
  const std::size_t n = em.n_knots();
  if (n == 0) throw ValidationError("run_filter: empty model");
  if (em.steps.size() + 1 != n)
    throw ValidationError("run_filter: transition count does not match knots");
  if (y.size() != em.n_obs())
    throw ValidationError("run_filter: y has " + std::to_string(y.size()) +
                          " entries but the model observes " +
                          std::to_string(em.n_obs()) + " knots");
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("run_filter: non-finite observation");

  pass.resize(n);
  pass.log_likelihood = 0.0;
  pass.a_pred[0].setZero();
  pass.p_pred[0] = em.init_var.asDiagonal();

  constexpr double log2pi = 1.8378770664093454836;
  std::size_t k = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (em.observed[j]) {
      const Vec3 m_col = pass.p_pred[j].col(0);
      const double f = m_col(0) + em.sigma2_eps;
      if (!std::isfinite(f) || !(f > 0.0))
        throw NumericalError(
            "run_filter: innovation variance " + std::to_string(f) + " at knot " +
            std::to_string(j) + "; the predicted covariance lost positive "
            "definiteness (ill-conditioned model)");
      const double v = y[k++] - pass.a_pred[j](0);
      pass.innovation[j] = v;
      pass.innovation_var[j] = f;
      const Vec3 gain = m_col / f;
      pass.a_filt[j] = pass.a_pred[j] + gain * v;
      // Joseph form keeps the updated covariance PSD.
      Mat3 imk = Mat3::Identity();
      imk.col(0) -= gain;  // I - K Z with Z = e1'
      pass.p_filt[j] = imk * pass.p_pred[j] * imk.transpose() +
                       em.sigma2_eps * (gain * gain.transpose());
      symmetrize(pass.p_filt[j]);
      pass.log_likelihood -= 0.5 * (log2pi + std::log(f) + v * v / f);
    } else {
      pass.a_filt[j] = pass.a_pred[j];
      pass.p_filt[j] = pass.p_pred[j];
    }
    if (j + 1 < n) {
      const Mat3& g = em.steps[j].g;
      pass.a_pred[j + 1] = g * pass.a_filt[j];
      pass.p_pred[j + 1] = g * pass.p_filt[j] * g.transpose() + em.steps[j].q;
      symmetrize(pass.p_pred[j + 1]);
    }
  }
}

// Backward r-recursion for smoothed means only (the hot path in MCMC):
//   r_{j-1} = e1 v_j/F_j + L_j' r_j,  L_j = T_j - (T_j P_j e1 / F_j) e1',
// smoothed mean = a_pred + P_pred r.
inline void smooth_means(const EngineModel& em, const FilterPass& pass,
                         std::vector<Vec3>& mean) {
  const std::size_t n = em.n_knots();
  mean.resize(n);
  Vec3 r = Vec3::Zero();
  for (std::size_t idx = n; idx-- > 0;) {
    const Mat3* t_out = (idx + 1 < n) ? &em.steps[idx].g : nullptr;
    if (em.observed[idx]) {
      const double f = pass.innovation_var[idx];
      const Vec3 m_col = pass.p_pred[idx].col(0);
      Vec3 r_new;
      if (t_out) {
        const Vec3 gain = (*t_out * m_col) / f;  // K_j
        // L' r = T' r - e1 (K . r)
        r_new = t_out->transpose() * r - Vec3(gain.dot(r), 0.0, 0.0);
      } else {
        r_new = Vec3::Zero();
      }
      r_new(0) += pass.innovation[idx] / f;
      r = r_new;
    } else if (t_out) {
      r = t_out->transpose() * r;
    } else {
      r.setZero();
    }
    mean[idx] = pass.a_pred[idx] + pass.p_pred[idx] * r;
  }
}

// Full backward pass: means plus marginal covariances via the N-recursion.
inline void smooth_marginals(const EngineModel& em, const FilterPass& pass,
                             std::vector<Vec3>& mean, std::vector<Mat3>& cov) {
  const std::size_t n = em.n_knots();
  mean.resize(n);
  cov.resize(n);
  Vec3 r = Vec3::Zero();
  Mat3 nn = Mat3::Zero();
  for (std::size_t idx = n; idx-- > 0;) {
    const bool has_out = (idx + 1 < n);
    const Mat3 t_out = has_out ? em.steps[idx].g : Mat3::Identity();
    if (em.observed[idx]) {
      const double f = pass.innovation_var[idx];
      const Vec3 m_col = pass.p_pred[idx].col(0);
      const Vec3 gain = (t_out * m_col) / f;
      Mat3 l = t_out;
      l.col(0) -= gain;  // L = T - K e1'
      Vec3 r_new = l.transpose() * r;
      r_new(0) += pass.innovation[idx] / f;
      Mat3 n_new = l.transpose() * nn * l;
      n_new(0, 0) += 1.0 / f;
      r = r_new;
      nn = n_new;
    } else {
      r = t_out.transpose() * r;
      nn = (t_out.transpose() * nn * t_out).eval();
    }
    mean[idx] = pass.a_pred[idx] + pass.p_pred[idx] * r;
    cov[idx] = pass.p_pred[idx] - pass.p_pred[idx] * nn * pass.p_pred[idx];
    symmetrize(cov[idx]);
  }
}

// ---- public, ModelSpec-facing surface ----

struct FilterState {
  Vec3 pred_mean = Vec3::Zero();
  Mat3 pred_cov = Mat3::Zero();
  double innovation = 0.0;
  double innovation_var = 0.0;
  Vec3 gain = Vec3::Zero();
};

struct FilterResult {
  std::vector<FilterState> steps;  // one per observed knot, in time order
  double log_likelihood = 0.0;
};

struct SmoothResult {
  std::vector<Vec3> mean;  // per knot
  std::vector<Mat3> cov;   // marginal smoothed covariance per knot
};

inline FilterResult filter(const statespace::ModelSpec& model,
                           const std::vector<double>& y) {
  const EngineModel em = engine_from(model);
  FilterPass pass;
  run_filter(em, y, pass);
  FilterResult out;
  out.log_likelihood = pass.log_likelihood;
  out.steps.reserve(y.size());
  for (std::size_t j = 0; j < em.n_knots(); ++j) {
    if (!em.observed[j]) continue;
    FilterState st;
    st.pred_mean = pass.a_pred[j];
    st.pred_cov = pass.p_pred[j];
    st.innovation = pass.innovation[j];
    st.innovation_var = pass.innovation_var[j];
    st.gain = pass.p_pred[j].col(0) / pass.innovation_var[j];
    out.steps.push_back(st);
  }
  return out;
}

inline SmoothResult smooth_mean(const statespace::ModelSpec& model,
                                const std::vector<double>& y) {
  const EngineModel em = engine_from(model);
  FilterPass pass;
  run_filter(em, y, pass);
  SmoothResult out;
  smooth_marginals(em, pass, out.mean, out.cov);
  return out;
}

// Workspace for repeated simulation-smoother calls.
struct SimSmootherWorkspace {
  FilterPass pass;
  std::vector<Vec3> theta_plus, mean_y, mean_plus;
  std::vector<double> y_plus;
};

// One joint draw of theta_0..theta_J from p(theta | y).  Draw order (states,
// then synthetic observations, then the two smoothing passes) is fixed, so a
// seeded stream reproduces bit-identical output.
inline void simulate_smoother(const EngineModel& em, const std::vector<double>& y,
                              RngStream& rng, SimSmootherWorkspace& ws,
                              std::vector<Vec3>& draw) {
  const std::size_t n = em.n_knots();
  ws.theta_plus.resize(n);
  ws.y_plus.clear();
  ws.y_plus.reserve(y.size());

  Vec3 z(rng.normal(), rng.normal(), rng.normal());
  ws.theta_plus[0] = em.init_var.cwiseSqrt().cwiseProduct(z);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const EngineStep& s = em.steps[j];
    Vec3 eta = Vec3::Zero();
    for (int k = 0; k < s.noise_dim; ++k) eta += s.noise_b.col(k) * rng.normal();
    ws.theta_plus[j + 1] = s.g * ws.theta_plus[j] + eta;
  }
  const double sd_eps = std::sqrt(em.sigma2_eps);
  for (std::size_t j = 0; j < n; ++j)
    if (em.observed[j]) ws.y_plus.push_back(ws.theta_plus[j](0) + sd_eps * rng.normal());

  run_filter(em, y, ws.pass);
  smooth_means(em, ws.pass, ws.mean_y);
  run_filter(em, ws.y_plus, ws.pass);
  smooth_means(em, ws.pass, ws.mean_plus);

  draw.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    draw[j] = ws.theta_plus[j] + ws.mean_y[j] - ws.mean_plus[j];
}

inline std::vector<Vec3> simulate_smoother(const statespace::ModelSpec& model,
                                           const std::vector<double>& y,
                                           RngStream& rng) {
  const EngineModel em = engine_from(model);
  SimSmootherWorkspace ws;
  std::vector<Vec3> draw;
  simulate_smoother(em, y, rng, ws, draw);
  return draw;
}

}  // namespace ngp::kalman
