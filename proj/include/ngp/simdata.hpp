#pragma once

#include "ngp/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

// Donoho-Johnstone benchmark functions and the SNR-calibrated datasets used
// for Table-1-style studies: J equally spaced design points on (0,1], truth
// rescaled so its sample SD over the grid is 7, noise sigma_eps = SD/snr
// (so snr = 7 gives unit noise variance, the classic calibration).

namespace ngp::simdata {

enum class Benchmark { blocks, bumps, heavisine, doppler };

inline const std::vector<Benchmark>& all_benchmarks() {
  static const std::vector<Benchmark> v{Benchmark::blocks, Benchmark::bumps,
                                        Benchmark::heavisine, Benchmark::doppler};
  return v;
}

inline std::string name_of(Benchmark f) {
  switch (f) {
    case Benchmark::blocks: return "blocks";
    case Benchmark::bumps: return "bumps";
    case Benchmark::heavisine: return "heavisine";
    case Benchmark::doppler: return "doppler";
  }
  throw ValidationError("unknown benchmark");
}

inline Benchmark benchmark_from_name(const std::string& s) {
  for (Benchmark f : all_benchmarks())
    if (name_of(f) == s) return f;
  throw ValidationError("unknown benchmark function '" + s +
                        "' (expected blocks, bumps, heavisine, or doppler)");
}

struct PieceTable {
  std::vector<double> knots;
  std::vector<double> heights;
  std::vector<double> widths;  // empty for blocks
};

inline const PieceTable& blocks_table() {
  static const PieceTable t{
      {0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81},
      {4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2},
      {}};
  return t;
}

inline const PieceTable& bumps_table() {
  static const PieceTable t{
      {0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81},
      {4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2},
      {0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005}};
  return t;
}

inline double true_function(Benchmark f, double t) {
  switch (f) {
    case Benchmark::blocks: {
      const PieceTable& tb = blocks_table();
      double v = 0.0;
      for (std::size_t i = 0; i < tb.knots.size(); ++i)
        v += tb.heights[i] * (1.0 + ((t - tb.knots[i]) > 0.0 ? 1.0
                                     : (t - tb.knots[i]) < 0.0 ? -1.0
                                                               : 0.0)) / 2.0;
      return v;
    }
    case Benchmark::bumps: {
      const PieceTable& tb = bumps_table();
      double v = 0.0;
      for (std::size_t i = 0; i < tb.knots.size(); ++i) {
        const double z = 1.0 + std::abs((t - tb.knots[i]) / tb.widths[i]);
        v += tb.heights[i] / (z * z * z * z);
      }
      return v;
    }
    case Benchmark::heavisine: {
      const auto sgn = [](double x) { return x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0; };
      return 4.0 * std::sin(4.0 * M_PI * t) - sgn(t - 0.3) - sgn(0.72 - t);
    }
    case Benchmark::doppler: {
      const double eps = 0.05;
      const double arg = t * (1.0 - t);
      if (arg <= 0.0) return 0.0;
      return std::sqrt(arg) * std::sin(2.0 * M_PI * (1.0 + eps) / (t + eps));
    }
  }
  throw ValidationError("unknown benchmark");
}

struct Dataset {
  TimeSeries series;          // design points and noisy observations
  std::vector<double> truth;  // rescaled true U at the design points
  double sigma_eps = 0.0;     // noise SD used
  double scale = 1.0;         // applied to the raw function
};

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) throw ValidationError("sample_sd: need at least two values");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / double(v.size() - 1));
}

struct BenchmarkSpec {
  Benchmark function = Benchmark::blocks;
  int j_points = 128;  // equally spaced design points on (0, 1]
  double snr = 7.0;    // SD(truth) / sigma_eps
  std::uint64_t seed = 0;

  void validate() const {
    if (j_points < 8) throw ValidationError("make_dataset: j_points must be >= 8");
    if (!std::isfinite(snr) || !(snr > 0.0))
      throw ValidationError("make_dataset: snr must be positive");
  }
};

inline Dataset make_dataset(const BenchmarkSpec& spec) {
  spec.validate();
  const int J = spec.j_points;

  Dataset d;
  d.series.t.resize(J);
  d.truth.resize(J);
  for (int j = 0; j < J; ++j) {
    d.series.t[j] = double(j + 1) / double(J);
    d.truth[j] = true_function(spec.function, d.series.t[j]);
  }
  const double raw_sd = sample_sd(d.truth);
  if (!(raw_sd > 0.0)) throw ValidationError("make_dataset: degenerate truth");
  d.scale = 7.0 / raw_sd;
  for (double& v : d.truth) v *= d.scale;

  d.sigma_eps = sample_sd(d.truth) / spec.snr;  // = 7/snr by construction
  RngStream rng(spec.seed);
  d.series.y.resize(J);
  for (int j = 0; j < J; ++j) d.series.y[j] = d.truth[j] + d.sigma_eps * rng.normal();
  return d;
}

inline Dataset make_dataset(Benchmark f, int J, double snr, std::uint64_t seed) {
  BenchmarkSpec spec;
  spec.function = f;
  spec.j_points = J;
  spec.snr = snr;
  spec.seed = seed;
  return make_dataset(spec);
}

inline double mse(const std::vector<double>& fit, const std::vector<double>& truth) {
  if (fit.size() != truth.size() || fit.empty())
    throw ValidationError("mse: length mismatch or empty input");
  double s = 0.0;
  for (std::size_t j = 0; j < fit.size(); ++j) {
    const double d = fit[j] - truth[j];
    s += d * d;
  }
  return s / double(fit.size());
}

}  // namespace ngp::simdata
