// Acceptance harness: one criterion per invocation (argv[1] in 1..8, or
// "all"), printing a single [PASS]/[FAIL] line per criterion with the
// measured quantities next to their required bounds.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ngp/kalman.hpp"
#include "ngp/kernels.hpp"
#include "ngp/nss.hpp"
#include "ngp/sampler.hpp"
#include "ngp/simdata.hpp"
#include "ngp/statespace.hpp"
#include "test_support.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double idx = p * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(idx));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double w = idx - double(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// --- 1. Oracle equivalence (Lemma 3 <-> state space) ---------------------

bool criterion1(std::string& msg) {
  const auto t0 = Clock::now();
  const std::size_t sizes[] = {8, 16, 64};
  double worst_mean = 0.0, worst_loglik = 0.0;

  for (int i = 0; i < 10; ++i) {
    const std::size_t J = sizes[i % 3];
    const ngp::TimeSeries s = ts::random_series(J, 100 + i);
    ngp::RngStream pr(500 + i);
    ngp::kernels::KernelParams kp;
    kp.sigma2_mu = 1.0 + 4.0 * pr.uniform();
    kp.sigma2_alpha = 1.0 + 3.0 * pr.uniform();
    kp.sigma2_U = 0.3 + 2.0 * pr.uniform();
    kp.sigma2_A = 0.2 + 1.5 * pr.uniform();
    const double s2e = 0.2 + pr.uniform();

    const auto model = ngp::statespace::build_model(s, kp, s2e);
    const auto sm = ngp::kalman::smooth_mean(model, s.y);
    const auto oracle = ngp::kernels::gp_posterior_oracle(s, kp, s2e, s.t);

    double scale = 1e-300;
    for (double v : oracle.mean) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < J; ++j)
      worst_mean = std::max(worst_mean,
                            std::abs(sm.mean[j + 1](0) - oracle.mean[j]) / scale);

    const double ll = ngp::kalman::filter(model, s.y).log_likelihood;
    const std::vector<double> tt = ngp::shifted_times(s.t);
    Eigen::MatrixXd k(J, J);
    for (std::size_t a = 0; a < J; ++a)
      for (std::size_t b = 0; b < J; ++b)
        k(a, b) = ngp::kernels::covariance_U(tt[a], tt[b], kp);
    k.diagonal().array() += s2e;
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.y.data(), J);
    const double dense = ts::mvn_logpdf(y, k);
    worst_loglik =
        std::max(worst_loglik, std::abs(ll - dense) / std::max(1.0, std::abs(dense)));
  }

  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "10 fixtures J in {8,16,64}: max U-mean rel err " << worst_mean
     << " (<= 1e-8), max loglik rel err " << worst_loglik << " (<= 1e-8), "
     << secs << " s (< 10 s)";
  msg = os.str();
  return worst_mean <= 1e-8 && worst_loglik <= 1e-8 && secs < 10.0;
}

// --- 2. Transition identities (Proposition 1 <-> Lemma 1) ----------------

bool criterion2(std::string& msg) {
  const auto t0 = Clock::now();
  double worst_w11 = 0.0, worst_semi = 0.0;

  const double pairs[][2] = {{0.7, 1.9}, {2.3, 0.4}};
  for (const auto& p : pairs) {
    const double s2u = p[0], s2a = p[1];
    for (double d : {0.01, 0.1, 1.0, 5.0}) {
      const auto tr = ngp::statespace::exact_transition(d, s2u, s2a);
      const double expect = s2u * ngp::kernels::reproducing_kernel(2, d, d) +
                            s2a * ngp::kernels::reproducing_kernel(3, d, d);
      worst_w11 = std::max(
          worst_w11, std::abs(tr.w(0, 0) - expect) / std::max(1.0, std::abs(expect)));
    }
  }

  // Semigroup: G(d1+d2) = G(d2) G(d1),  W(d1+d2) = G(d2) W(d1) G(d2)' + W(d2).
  ngp::RngStream rng(77);
  std::vector<std::pair<double, double>> splits;
  for (double d : {0.01, 0.1, 1.0, 5.0}) splits.emplace_back(0.4 * d, 0.6 * d);
  for (int i = 0; i < 20; ++i)
    splits.emplace_back(0.01 + 2.0 * rng.uniform(), 0.01 + 2.0 * rng.uniform());
  for (const auto& [d1, d2] : splits) {
    const auto a = ngp::statespace::exact_transition(d1, 0.7, 1.9);
    const auto b = ngp::statespace::exact_transition(d2, 0.7, 1.9);
    const auto c = ngp::statespace::exact_transition(d1 + d2, 0.7, 1.9);
    const ngp::Mat3 g_comp = b.g * a.g;
    const ngp::Mat3 w_comp = b.g * a.w * b.g.transpose() + b.w;
    const double wscale = std::max(1.0, c.w.cwiseAbs().maxCoeff());
    worst_semi = std::max(worst_semi, (g_comp - c.g).cwiseAbs().maxCoeff());
    worst_semi =
        std::max(worst_semi, (w_comp - c.w).cwiseAbs().maxCoeff() / wscale);
  }

  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "W(1,1) identity max rel err " << worst_w11
     << " (<= 1e-12), semigroup max err " << worst_semi << " (<= 1e-12), " << secs
     << " s (< 1 s)";
  msg = os.str();
  return worst_w11 <= 1e-12 && worst_semi <= 1e-12 && secs < 1.0;
}

// --- 3. Simulation-smoother correctness -----------------------------------

bool criterion3(std::string& msg) {
  const auto t0 = Clock::now();
  const ngp::TimeSeries s = ts::random_series(32, 57);
  ngp::kernels::KernelParams kp;
  kp.sigma2_mu = 9.0;
  kp.sigma2_alpha = 4.0;
  const auto model = ngp::statespace::build_model(s, kp, 0.5);
  const auto analytic = ngp::kalman::smooth_mean(model, s.y);

  const int n_draws = 5000;
  const auto em = ngp::kalman::engine_from(model);
  ngp::kalman::SimSmootherWorkspace ws;
  ngp::RngStream rng(424242);
  const std::size_t n = em.n_knots();
  std::vector<ngp::Vec3> draw, sum(n, ngp::Vec3::Zero()), sumsq(n, ngp::Vec3::Zero());
  for (int i = 0; i < n_draws; ++i) {
    ngp::kalman::simulate_smoother(em, s.y, rng, ws, draw);
    for (std::size_t k = 0; k < n; ++k) {
      sum[k] += draw[k];
      sumsq[k] += draw[k].cwiseProduct(draw[k]);
    }
  }

  double worst_z = 0.0, worst_var = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const ngp::Vec3 mean = sum[k] / double(n_draws);
    for (int c = 0; c < 3; ++c) {
      const double se = std::sqrt(analytic.cov[k](c, c) / double(n_draws));
      if (se > 0.0)
        worst_z = std::max(worst_z, std::abs(mean(c) - analytic.mean[k](c)) / se);
      const double emp = (sumsq[k](c) - double(n_draws) * mean(c) * mean(c)) /
                         double(n_draws - 1);
      worst_var = std::max(worst_var,
                           std::abs(emp - analytic.cov[k](c, c)) /
                               std::max(analytic.cov[k](c, c), 1e-12));
    }
  }

  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "J=32, 5000 draws: max |z| " << worst_z << " (<= 4), max variance rel dev "
     << worst_var << " (<= 0.10), " << secs << " s (< 30 s)";
  msg = os.str();
  return worst_z <= 4.0 && worst_var <= 0.10 && secs < 30.0;
}

// --- 4. Theorem 5 equivalence ---------------------------------------------

bool criterion4(std::string& msg) {
  const auto t0 = Clock::now();
  const int J = 48;
  const ngp::TimeSeries s =
      ngp::simdata::make_dataset(ngp::simdata::Benchmark::heavisine, J, 7.0, 2)
          .series;
  const double s2e = 0.4, s2u = 1.5, s2a = 3.0;

  const auto [lu, la] = ngp::nss::lambdas_from_variances(s2e, s2u, s2a, J);
  ngp::nss::NssConfig cfg;
  cfg.lambda_U = lu;
  cfg.lambda_A = la;
  const auto fit = ngp::nss::fit_nss(s, cfg);

  ngp::kernels::KernelParams kp;
  kp.sigma2_mu = 1e8;
  kp.sigma2_alpha = 1e8;
  kp.sigma2_U = s2u;
  kp.sigma2_A = s2a;
  const auto oracle = ngp::kernels::gp_posterior_oracle(s, kp, s2e, s.t);

  double scale = 1e-300, worst = 0.0;
  for (double v : oracle.mean) scale = std::max(scale, std::abs(v));
  for (int j = 0; j < J; ++j)
    worst = std::max(worst, std::abs(fit.fitted(j) - oracle.mean[j]) / scale);

  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "J=48: max rel diff nSS vs GP posterior " << worst << " (<= 1e-4), " << secs
     << " s (< 5 s)";
  msg = os.str();
  return worst <= 1e-4 && secs < 5.0;
}

// --- 5. Acceptance-ratio double entry --------------------------------------

bool criterion5(std::string& msg) {
  const ngp::TimeSeries s = ts::random_series(4, 15);
  ngp::kernels::KernelParams kp;
  const auto model = ngp::statespace::build_model(s, kp, 0.5);

  ngp::RngStream rng(21);
  auto states = [&](std::uint64_t seed) {
    ngp::RngStream r(seed);
    std::vector<ngp::Vec3> out(5);
    for (auto& v : out) v = ngp::Vec3(1.2 * r.normal(), 1.2 * r.normal(), 1.2 * r.normal());
    return out;
  };
  const auto theta = states(21);
  const auto theta_star = states(22);
  const ngp::sampler::NoiseVariances cur{0.9, 2.2};
  const ngp::sampler::NoiseVariances prop{1.4, 0.6};

  double indep = 0.0;
  for (int j = 3; j >= 0; --j) {
    const double d = model.transitions[j].delta;
    const Eigen::VectorXd resid =
        theta[j + 1] - ts::drift_exp(d) * theta[j];
    indep += ts::mvn_logpdf(resid, ts::quad_W(d, prop.sigma2_U, prop.sigma2_A)) -
             ts::mvn_logpdf(resid, ts::quad_W(d, cur.sigma2_U, cur.sigma2_A));
    ngp::Mat3 ge = ngp::Mat3::Identity();
    ge(0, 1) = d;
    ge(1, 2) = d;
    const ngp::Vec3 diff = theta_star[j + 1] - ge * theta_star[j];
    Eigen::VectorXd e(2);
    e << diff(1), diff(2);
    Eigen::MatrixXd wt = Eigen::MatrixXd::Zero(2, 2);
    wt(0, 0) = cur.sigma2_U * d;
    wt(1, 1) = cur.sigma2_A * d;
    const double lq_cur = ts::mvn_logpdf(e, wt);
    wt(0, 0) = prop.sigma2_U * d;
    wt(1, 1) = prop.sigma2_A * d;
    indep += lq_cur - ts::mvn_logpdf(e, wt);
  }

  const auto lr = ngp::sampler::accept_log_ratio(theta, theta_star, cur, prop, model);
  const double diff =
      lr ? std::abs(*lr - indep) / std::max(1.0, std::abs(indep)) : 1e300;
  const double p_equal =
      ngp::sampler::accept_probability(theta, theta_star, cur, cur, model);

  std::ostringstream os;
  os << "J=4: log-ratio rel diff vs independent evaluation " << diff
     << " (<= 1e-10), equal-proposal probability " << p_equal << " (== 1 exactly)";
  msg = os.str();
  return lr.has_value() && diff <= 1e-10 && p_equal == 1.0;
}

// --- 6. Desk-scale Table 1 reproduction ------------------------------------

// Data-driven (sigma2_eps, sigma2_U, sigma2_A) point estimates: noise scale
// from the median absolute first difference, sigma2_U from the smallest
// half-decade whose smoothed fit reaches that noise floor, sigma2_A from a
// coarse marginal-likelihood grid at the chosen sigma2_U.
std::array<double, 3> pilot_variances(const ngp::TimeSeries& s) {
  const std::size_t J = s.size();
  std::vector<double> ad(J - 1);
  for (std::size_t j = 0; j + 1 < J; ++j) ad[j] = std::abs(s.y[j + 1] - s.y[j]);
  std::nth_element(ad.begin(), ad.begin() + ad.size() / 2, ad.end());
  const double sig = ad[ad.size() / 2] / 0.9539;
  const double se = std::max(sig * sig, 1e-8);

  ngp::kernels::KernelParams kp;
  kp.sigma2_mu = 1e4;
  kp.sigma2_alpha = 1e4;
  kp.sigma2_A = 1e-2;
  double su = 1.0, arg_best = 1.0;
  double best_rss = std::numeric_limits<double>::infinity();
  bool met = false;
  for (double lu = -2.0; lu <= 14.0 && !met; lu += 0.5) {
    kp.sigma2_U = std::pow(10.0, lu);
    const auto model = ngp::statespace::build_model(s, kp, se);
    const auto sm = ngp::kalman::smooth_mean(model, s.y);
    double rss = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      const double r = s.y[j] - sm.mean[j + 1](0);
      rss += r * r;
    }
    rss /= double(J);
    if (rss < best_rss) {
      best_rss = rss;
      arg_best = kp.sigma2_U;
    }
    if (rss <= 1.1 * se) {
      su = kp.sigma2_U;
      met = true;
    }
  }
  if (!met) su = arg_best;

  double sa = 1.0, best_ll = -std::numeric_limits<double>::infinity();
  for (double la : {-2.0, 2.0, 6.0, 10.0}) {
    kp.sigma2_U = su;
    kp.sigma2_A = std::pow(10.0, la);
    const auto model = ngp::statespace::build_model(s, kp, se);
    const auto fr = ngp::kalman::filter(model, s.y);
    if (fr.log_likelihood > best_ll) {
      best_ll = fr.log_likelihood;
      sa = kp.sigma2_A;
    }
  }
  return {se, su, sa};
}

bool criterion6(std::string& msg) {
  const auto t0 = Clock::now();
  const int J = 128, reps = 20;
  const double bands[4][2] = {
      {0.4, 2.0}, {0.4, 2.2}, {0.15, 0.7}, {0.4, 2.2}};  // blocks..doppler

  std::ostringstream os;
  bool ok = true;
  int bumps_wins = 0;
  const auto& funcs = ngp::simdata::all_benchmarks();
  for (std::size_t fi = 0; fi < funcs.size(); ++fi) {
    std::vector<double> mses;
    for (int rep = 0; rep < reps; ++rep) {
      const auto data = ngp::simdata::make_dataset(
          funcs[fi], J, 7.0, 1000 * (fi + 1) + std::uint64_t(rep));
      ngp::sampler::PriorConfig prior;
      ngp::sampler::McmcConfig cfg;
      cfg.n_iter = 1500;
      cfg.burn_in = 500;
      cfg.seed = 90000 + 1000 * fi + std::uint64_t(rep);
      const auto draws = ngp::sampler::run_chain(data.series, prior, cfg);

      std::vector<double> mean(J);
      for (int j = 0; j < J; ++j) mean[j] = draws.u.col(j).mean();
      mses.push_back(ngp::simdata::mse(mean, data.truth));

      if (funcs[fi] == ngp::simdata::Benchmark::bumps) {
        // Deliberately oversmoothed baseline: lambda_U at 100x the Theorem 5
        // mapping.  The mapping needs variance point estimates; a chain whose
        // fit tracks the spikes reports a posterior-mean sigma2_U so large
        // that the mapped lambda_U is an interpolant and no multiple of it
        // oversmooths, so the mapping is evaluated at data-driven estimates
        // instead: MAD-of-first-differences noise scale, residual-discrepancy
        // crossing for sigma2_U, coarse marginal-likelihood pick for sigma2_A.
        const auto pv = pilot_variances(data.series);
        ngp::nss::NssConfig ncfg;
        ncfg.lambda_U = 100.0 * pv[0] / (double(J) * pv[1]);
        ncfg.lambda_A = pv[0] / (double(J) * pv[2]);
        const auto fit = ngp::nss::fit_nss(data.series, ncfg);
        std::vector<double> nss_fit(fit.fitted.data(), fit.fitted.data() + J);
        if (mses.back() < ngp::simdata::mse(nss_fit, data.truth)) ++bumps_wins;
      }
    }
    const double avg = mean_of(mses);
    const bool in_band = avg >= bands[fi][0] && avg <= bands[fi][1];
    ok = ok && in_band;
    os << ngp::simdata::name_of(funcs[fi]) << " avg MSE " << avg << " in ["
       << bands[fi][0] << ", " << bands[fi][1] << "] "
       << (in_band ? "yes" : "NO") << "; ";
  }
  ok = ok && bumps_wins >= 18;
  const double secs = seconds_since(t0);
  os << "Bumps beats oversmoothed nSS " << bumps_wins << "/20 (>= 18); " << secs
     << " s (< 900 s)";
  ok = ok && secs < 900.0;
  msg = os.str();
  return ok;
}

// --- 7. Scalability ---------------------------------------------------------

bool criterion7(std::string& msg) {
  // Per-iteration wall clock at J=2,000 vs J=20,000 (both timed over the same
  // iteration count, best of two runs), then the Section 5 scale end to end.
  auto per_iter = [](int j) {
    const ngp::TimeSeries s =
        ngp::simdata::make_dataset(ngp::simdata::Benchmark::doppler, j, 7.0, 1)
            .series;
    ngp::sampler::PriorConfig prior;
    ngp::sampler::McmcConfig cfg;
    cfg.n_iter = 60;
    cfg.burn_in = 0;
    cfg.seed = 5;
    double best = 1e300;
    for (int rep = 0; rep < 2; ++rep) {
      const auto t0 = Clock::now();
      const auto draws = ngp::sampler::run_chain(s, prior, cfg);
      const double secs = seconds_since(t0);
      if (draws.u.rows() != 60) return -1.0;
      best = std::min(best, secs / 60.0);
    }
    return best;
  };

  const double small = per_iter(2000);
  const double big = per_iter(20000);
  const double ratio = big / small;

  const auto t0 = Clock::now();
  const ngp::TimeSeries s =
      ngp::simdata::make_dataset(ngp::simdata::Benchmark::heavisine, 11186, 7.0, 3)
          .series;
  ngp::sampler::PriorConfig prior;
  ngp::sampler::McmcConfig cfg;
  cfg.n_iter = 1500;
  cfg.burn_in = 500;
  cfg.seed = 9;
  const auto draws = ngp::sampler::run_chain(s, prior, cfg);
  const double full_secs = seconds_since(t0);
  const bool finite = draws.u.allFinite() && mean_of(draws.sigma2_eps) > 0.0;

  std::ostringstream os;
  os << "per-iter " << small * 1e3 << " ms at J=2k, " << big * 1e3
     << " ms at J=20k, ratio " << ratio << " (in [5, 20]); J=11,186 x 1500 iters "
     << full_secs << " s (< 1800 s)";
  msg = os.str();
  return small > 0.0 && big > 0.0 && ratio >= 5.0 && ratio <= 20.0 && finite &&
         full_secs < 1800.0;
}

// --- 8. Self-consistency of inference ---------------------------------------

bool criterion8(std::string& msg) {
  const auto t0 = Clock::now();
  const int J = 256, reps = 20;
  const double delta = 0.02, s2u = 1.0, s2a = 0.5, true_s2e = 1.0;
  const auto tr = ngp::statespace::exact_transition(delta, s2u, s2a);
  ngp::Mat3 chol_w;
  if (!ngp::kalman::cholesky_with_jitter(tr.w, chol_w)) {
    msg = "process noise covariance not PD at the generation step";
    return false;
  }

  int covered = 0;
  for (int rep = 0; rep < reps; ++rep) {
    ngp::RngStream gen(3000 + rep);
    ngp::Vec3 theta(0.5 * gen.normal(), 0.3 * gen.normal(), 0.3 * gen.normal());
    ngp::TimeSeries s;
    for (int j = 0; j < J; ++j) {
      theta = tr.g * theta +
              chol_w * ngp::Vec3(gen.normal(), gen.normal(), gen.normal());
      s.t.push_back(delta * double(j + 1));
      s.y.push_back(theta(0) + std::sqrt(true_s2e) * gen.normal());
    }

    ngp::sampler::PriorConfig prior;
    ngp::sampler::McmcConfig cfg;
    cfg.n_iter = 1200;
    cfg.burn_in = 300;
    cfg.seed = 7000 + std::uint64_t(rep);
    const auto draws = ngp::sampler::run_chain(s, prior, cfg);
    const double lo = quantile(draws.sigma2_eps, 0.05);
    const double hi = quantile(draws.sigma2_eps, 0.95);
    if (lo <= true_s2e && true_s2e <= hi) ++covered;
  }

  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "90% intervals covered true sigma2_eps in " << covered << "/" << reps
     << " replicates (>= 14) at J=256, " << secs << " s";
  msg = os.str();
  return covered >= 14;
}

using CriterionFn = bool (*)(std::string&);

}  // namespace

int main(int argc, char** argv) {
  const CriterionFn fns[] = {criterion1, criterion2, criterion3, criterion4,
                             criterion5, criterion6, criterion7, criterion8};
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <1..8|all>\n", argv[0]);
    return 2;
  }

  int first = 0, last = 7;
  const std::string arg = argv[1];
  if (arg != "all") {
    const int n = std::atoi(argv[1]);
    if (n < 1 || n > 8) {
      std::fprintf(stderr, "usage: %s <1..8|all>\n", argv[0]);
      return 2;
    }
    first = last = n - 1;
  }

  bool all_ok = true;
  for (int i = first; i <= last; ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = fns[i](detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", i + 1,
                detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
