// ngp: nested-Gaussian-process regression at the command line.
//
//   ngp fit   <data.csv>  MCMC posterior for U, D1U, and the variances
//   ngp nss   <data.csv>  closed-form nested smoothing spline
//   ngp bench             Donoho-Johnstone benchmark study
//
// Exit codes: 0 success, 2 usage/I-O, 3 input validation, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include "ngp/io.hpp"
#include "ngp/kalman.hpp"
#include "ngp/kernels.hpp"
#include "ngp/nss.hpp"
#include "ngp/sampler.hpp"
#include "ngp/simdata.hpp"
#include "ngp/statespace.hpp"
#include "ngp/types.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

using nlohmann::json;

// Linear-interpolation quantile on a copy (R type 7).
double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw ngp::ValidationError("quantile of empty vector");
  std::sort(v.begin(), v.end());
  const double pos = p * double(v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - double(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

json summarize_draws(const std::vector<double>& draws) {
  return json{{"mean", mean_of(draws)},
              {"q025", quantile(draws, 0.025)},
              {"q500", quantile(draws, 0.5)},
              {"q975", quantile(draws, 0.975)}};
}

int threads_from_env() {
  int hw = int(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("NGP_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t >= 1) return t;
    } catch (...) {
      // unusable value: fall through to the hardware default
    }
  }
  return hw;
}

struct FitOptions {
  std::string input, out;
  int iters = -1, burnin = -1, thin = -1;
  std::uint64_t seed = 0;
  ngp::sampler::PriorConfig prior;
  bool oracle = false;
  double sigma2_eps = 1.0, sigma2_u = 1.0, sigma2_a = 1.0;
  bool sigma_mu_set = false, sigma_alpha_set = false;
};

void emit_report(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    ngp::io::write_text(out_path, text);
}

int run_fit(const FitOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  ngp::TimeSeries series = ngp::io::read_csv(opt.input);
  series.validate();
  const std::size_t J = series.size();

  json report;
  report["schema_version"] = 1;
  report["eval_times"] = series.t;

  if (opt.oracle) {
    // Fixed-variance GP posterior: dense oracle for U, the equivalent
    // state-space smoother for D1U.  Diffuse initial SDs default to 1e4.
    ngp::kernels::KernelParams kp;
    kp.sigma2_mu = (opt.sigma_mu_set ? opt.prior.sigma_mu : 1e4) *
                   (opt.sigma_mu_set ? opt.prior.sigma_mu : 1e4);
    kp.sigma2_alpha = (opt.sigma_alpha_set ? opt.prior.sigma_alpha : 1e4) *
                      (opt.sigma_alpha_set ? opt.prior.sigma_alpha : 1e4);
    kp.sigma2_U = opt.sigma2_u;
    kp.sigma2_A = opt.sigma2_a;
    const ngp::kernels::GpPosterior post =
        ngp::kernels::gp_posterior_oracle(series, kp, opt.sigma2_eps, series.t);

    const ngp::statespace::ModelSpec model =
        ngp::statespace::build_model(series, kp, opt.sigma2_eps);
    const ngp::kalman::SmoothResult sm = ngp::kalman::smooth_mean(model, series.y);

    std::vector<double> lo(J), hi(J), du(J), du_lo(J), du_hi(J);
    for (std::size_t j = 0; j < J; ++j) {
      const double sd = std::sqrt(std::max(post.var[j], 0.0));
      lo[j] = post.mean[j] - 1.959963984540054 * sd;
      hi[j] = post.mean[j] + 1.959963984540054 * sd;
      du[j] = sm.mean[j + 1](1);
      const double dsd = std::sqrt(std::max(sm.cov[j + 1](1, 1), 0.0));
      du_lo[j] = du[j] - 1.959963984540054 * dsd;
      du_hi[j] = du[j] + 1.959963984540054 * dsd;
    }
    report["mode"] = "oracle";
    report["posterior_mean_U"] = post.mean;
    report["ci_lower_U"] = lo;
    report["ci_upper_U"] = hi;
    report["posterior_mean_DU"] = du;
    report["ci_lower_DU"] = du_lo;
    report["ci_upper_DU"] = du_hi;
    report["config"] = {{"sigma2_eps", opt.sigma2_eps},
                        {"sigma2_U", opt.sigma2_u},
                        {"sigma2_A", opt.sigma2_a},
                        {"sigma2_mu", kp.sigma2_mu},
                        {"sigma2_alpha", kp.sigma2_alpha}};
  } else {
    ngp::sampler::McmcConfig cfg;
    // Long-series defaults follow the real-data protocol (11,000 draws,
    // 1,000 burn-in, thin 10); desk scale uses 1,500/500/1.
    if (J > 5000) {
      cfg.n_iter = 11000;
      cfg.burn_in = 1000;
      cfg.thin = 10;
    } else {
      cfg.n_iter = 1500;
      cfg.burn_in = 500;
      cfg.thin = 1;
    }
    if (opt.iters >= 0) cfg.n_iter = opt.iters;
    if (opt.burnin >= 0) cfg.burn_in = opt.burnin;
    if (opt.thin >= 1) cfg.thin = opt.thin;
    cfg.seed = opt.seed;

    const ngp::sampler::ChainDraws draws =
        ngp::sampler::run_chain(series, opt.prior, cfg);

    const int kept = int(draws.u.rows());
    std::vector<double> mean_u(J), lo_u(J), hi_u(J), mean_du(J), lo_du(J), hi_du(J);
    std::vector<double> col(kept);
    for (std::size_t j = 0; j < J; ++j) {
      for (int k = 0; k < kept; ++k) col[k] = draws.u(k, j);
      mean_u[j] = mean_of(col);
      lo_u[j] = quantile(col, 0.025);
      hi_u[j] = quantile(col, 0.975);
      for (int k = 0; k < kept; ++k) col[k] = draws.du(k, j);
      mean_du[j] = mean_of(col);
      lo_du[j] = quantile(col, 0.025);
      hi_du[j] = quantile(col, 0.975);
    }
    report["mode"] = "mcmc";
    report["posterior_mean_U"] = mean_u;
    report["ci_lower_U"] = lo_u;
    report["ci_upper_U"] = hi_u;
    report["posterior_mean_DU"] = mean_du;
    report["ci_lower_DU"] = lo_du;
    report["ci_upper_DU"] = hi_du;
    report["variance_summaries"] = {{"sigma2_eps", summarize_draws(draws.sigma2_eps)},
                                    {"sigma2_U", summarize_draws(draws.sigma2_U)},
                                    {"sigma2_A", summarize_draws(draws.sigma2_A)}};
    report["acceptance_rate"] = draws.mh_accept_rate;
    report["config"] = {{"seed", cfg.seed},
                        {"iterations", cfg.n_iter},
                        {"burn_in", cfg.burn_in},
                        {"thin", cfg.thin},
                        {"prior_a", opt.prior.a},
                        {"prior_b", opt.prior.b},
                        {"sigma_mu", opt.prior.sigma_mu},
                        {"sigma_alpha", opt.prior.sigma_alpha},
                        {"rescale_factor", draws.rescale_factor},
                        {"time_shift", draws.time_shift}};
  }

  const auto t1 = std::chrono::steady_clock::now();
  report["runtime_seconds"] = std::chrono::duration<double>(t1 - t0).count();
  emit_report(report, opt.out);
  return 0;
}

struct NssOptions {
  std::string input, out;
  double lambda_u = 0.0, lambda_a = 0.0;
  int m = 2, n = 1;
};

int run_nss(const NssOptions& opt) {
  ngp::TimeSeries series = ngp::io::read_csv(opt.input);
  series.validate();

  ngp::nss::NssConfig cfg;
  cfg.m = opt.m;
  cfg.n = opt.n;
  cfg.lambda_U = opt.lambda_u;
  cfg.lambda_A = opt.lambda_a;
  const ngp::nss::NssFit fit = ngp::nss::fit_nss(series, cfg);

  std::ostringstream csv;
  csv.precision(17);
  csv << "t,fitted\n";
  for (std::size_t j = 0; j < series.size(); ++j)
    csv << series.t[j] << "," << fit.fitted(j) << "\n";
  if (opt.out.empty())
    std::cout << csv.str();
  else
    ngp::io::write_text(opt.out, csv.str());

  json coef;
  coef["schema_version"] = 1;
  coef["m"] = cfg.m;
  coef["n"] = cfg.n;
  coef["lambda_u"] = cfg.lambda_U;
  coef["lambda_a"] = cfg.lambda_A;
  coef["mu"] = std::vector<double>(fit.mu.data(), fit.mu.data() + fit.mu.size());
  coef["alpha"] =
      std::vector<double>(fit.alpha.data(), fit.alpha.data() + fit.alpha.size());
  coef["nu"] = std::vector<double>(fit.nu.data(), fit.nu.data() + fit.nu.size());
  coef["beta"] =
      std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size());
  if (!opt.out.empty())
    ngp::io::write_text(opt.out + ".coef.json", coef.dump(2) + "\n");
  return 0;
}

struct BenchOptions {
  std::string functions = "blocks,bumps,heavisine,doppler";
  int replicates = 20;
  int j = 128;
  double snr = 7.0;
  std::uint64_t seed = 0;
  int iters = 1500, burnin = 500, thin = 1;
  ngp::sampler::PriorConfig prior;
  std::string out;
};

int run_bench(const BenchOptions& opt) {
  if (opt.replicates < 1) throw ngp::ValidationError("--replicates must be >= 1");
  if (opt.j < 8) throw ngp::ValidationError("--j must be >= 8");

  std::vector<ngp::simdata::Benchmark> funcs;
  std::stringstream ss(opt.functions);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!ngp::io::trim(tok).empty())
      funcs.push_back(ngp::simdata::benchmark_from_name(ngp::io::trim(tok)));
  if (funcs.empty()) throw ngp::ValidationError("--functions named no benchmarks");

  struct Task {
    ngp::simdata::Benchmark f;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t fi = 0; fi < funcs.size(); ++fi)
    for (int r = 0; r < opt.replicates; ++r)
      tasks.push_back({funcs[fi], r});

  std::vector<double> mses(tasks.size(), 0.0);
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& tk = tasks[i];
      const auto fi =
          std::size_t(std::find(funcs.begin(), funcs.end(), tk.f) - funcs.begin());
      const ngp::simdata::Dataset ds = ngp::simdata::make_dataset(
          tk.f, opt.j, opt.snr,
          ngp::mix_seed(opt.seed, fi * 1000003ULL + std::uint64_t(tk.rep)));
      ngp::sampler::McmcConfig cfg;
      cfg.n_iter = opt.iters;
      cfg.burn_in = opt.burnin;
      cfg.thin = opt.thin;
      cfg.seed = ngp::mix_seed(opt.seed + 1, fi * 1000003ULL + std::uint64_t(tk.rep));
      const ngp::sampler::ChainDraws draws =
          ngp::sampler::run_chain(ds.series, opt.prior, cfg);
      std::vector<double> post_mean(ds.series.size());
      for (std::size_t c = 0; c < post_mean.size(); ++c)
        post_mean[c] = draws.u.col(c).mean();
      mses[i] = ngp::simdata::mse(post_mean, ds.truth);
    }
  };

  const int n_threads = std::min<int>(threads_from_env(), int(tasks.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::ostringstream csv, table;
  csv << "function,replicates,mean_mse,sd_mse,median_mse,q25_mse,q75_mse,iqr_mse\n";
  table << "function    replicates   mean MSE     median      IQR\n";
  csv.precision(12);
  for (std::size_t fi = 0; fi < funcs.size(); ++fi) {
    std::vector<double> v;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (std::size_t(std::find(funcs.begin(), funcs.end(), tasks[i].f) -
                      funcs.begin()) == fi)
        v.push_back(mses[i]);
    const double mean = mean_of(v);
    double sd = 0.0;
    if (v.size() > 1) {
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / double(v.size() - 1));
    }
    const double med = quantile(v, 0.5), q25 = quantile(v, 0.25),
                 q75 = quantile(v, 0.75);
    csv << ngp::simdata::name_of(funcs[fi]) << "," << v.size() << "," << mean << ","
        << sd << "," << med << "," << q25 << "," << q75 << "," << (q75 - q25)
        << "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-11s %10zu   %9.4f   %9.4f   %9.4f\n",
                  ngp::simdata::name_of(funcs[fi]).c_str(), v.size(), mean, med,
                  q75 - q25);
    table << buf;
  }
  std::cout << table.str();
  if (!opt.out.empty()) ngp::io::write_text(opt.out, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nested Gaussian process regression (nGP): MCMC fitter, nested "
               "smoothing spline, and benchmark harness"};
  app.require_subcommand(1);

  FitOptions fit_opt;
  CLI::App* fit = app.add_subcommand("fit", "sample the nGP posterior for a series");
  fit->add_option("input", fit_opt.input, "CSV file with a t,y header")->required();
  fit->add_option("--iters", fit_opt.iters, "MCMC iterations (default: by series size)");
  fit->add_option("--burnin", fit_opt.burnin, "burn-in iterations");
  fit->add_option("--thin", fit_opt.thin, "keep every thin-th draw");
  fit->add_option("--seed", fit_opt.seed, "RNG seed");
  fit->add_option("--prior-a", fit_opt.prior.a, "inverse-gamma shape a");
  fit->add_option("--prior-b", fit_opt.prior.b, "inverse-gamma scale b");
  auto* f_sm = fit->add_option("--sigma-mu", fit_opt.prior.sigma_mu,
                               "initial-value prior SD for U derivatives");
  auto* f_sa = fit->add_option("--sigma-alpha", fit_opt.prior.sigma_alpha,
                               "initial-value prior SD for A");
  fit->add_option("--out", fit_opt.out, "JSON report path (default: stdout)");
  fit->add_flag("--oracle", fit_opt.oracle,
                "fixed-variance dense GP posterior instead of MCMC");
  fit->add_option("--sigma2-eps", fit_opt.sigma2_eps, "oracle: measurement variance");
  fit->add_option("--sigma2-u", fit_opt.sigma2_u, "oracle: sigma2_U");
  fit->add_option("--sigma2-a", fit_opt.sigma2_a, "oracle: sigma2_A");

  NssOptions nss_opt;
  CLI::App* nss = app.add_subcommand("nss", "closed-form nested smoothing spline");
  nss->add_option("input", nss_opt.input, "CSV file with a t,y header")->required();
  nss->add_option("--lambda-u", nss_opt.lambda_u, "penalty on (D^m U - A)")->required();
  nss->add_option("--lambda-a", nss_opt.lambda_a, "penalty on D^n A")->required();
  nss->add_option("--m", nss_opt.m, "order of the U equation (default 2)");
  nss->add_option("--n", nss_opt.n, "order of the A equation (default 1)");
  nss->add_option("--out", nss_opt.out,
                  "fitted CSV path; coefficients go to <out>.coef.json");

  BenchOptions bench_opt;
  CLI::App* bench = app.add_subcommand("bench", "Donoho-Johnstone benchmark study");
  bench->add_option("--functions", bench_opt.functions,
                    "comma-separated benchmark names");
  bench->add_option("--replicates", bench_opt.replicates, "replicates per function");
  bench->add_option("--j", bench_opt.j, "design points per replicate");
  bench->add_option("--snr", bench_opt.snr, "signal-to-noise ratio SD(U)/sigma_eps");
  bench->add_option("--seed", bench_opt.seed, "base RNG seed");
  bench->add_option("--iters", bench_opt.iters, "MCMC iterations per replicate");
  bench->add_option("--burnin", bench_opt.burnin, "burn-in iterations");
  bench->add_option("--thin", bench_opt.thin, "keep every thin-th draw");
  bench->add_option("--prior-a", bench_opt.prior.a, "inverse-gamma shape a");
  bench->add_option("--prior-b", bench_opt.prior.b, "inverse-gamma scale b");
  bench->add_option("--sigma-mu", bench_opt.prior.sigma_mu, "initial prior SD");
  bench->add_option("--sigma-alpha", bench_opt.prior.sigma_alpha, "initial prior SD");
  bench->add_option("--out", bench_opt.out, "summary CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    fit_opt.sigma_mu_set = f_sm->count() > 0;
    fit_opt.sigma_alpha_set = f_sa->count() > 0;
    if (*fit) return run_fit(fit_opt);
    if (*nss) return run_nss(nss_opt);
    if (*bench) return run_bench(bench_opt);
  } catch (const ngp::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ngp::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ngp::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
