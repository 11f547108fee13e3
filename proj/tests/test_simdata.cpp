#include "ngp/simdata.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using ngp::simdata::Benchmark;
using ngp::simdata::make_dataset;
using ngp::simdata::true_function;

TEST(SimdataTest, NamesRoundTrip) {
  for (Benchmark f : ngp::simdata::all_benchmarks())
    EXPECT_EQ(ngp::simdata::benchmark_from_name(ngp::simdata::name_of(f)), f);
  EXPECT_THROW(ngp::simdata::benchmark_from_name("spikes"), ngp::ValidationError);
}

TEST(SimdataTest, BlocksPiecewiseConstant) {
  const auto& knots = ngp::simdata::blocks_table().knots;
  std::vector<double> edges{0.0};
  edges.insert(edges.end(), knots.begin(), knots.end());
  edges.push_back(1.0);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double a = edges[i], b = edges[i + 1];
    const double v1 = true_function(Benchmark::blocks, a + 0.25 * (b - a));
    const double v2 = true_function(Benchmark::blocks, a + 0.75 * (b - a));
    EXPECT_EQ(v1, v2) << "interval (" << a << ", " << b << ")";
  }
  // Adjacent intervals differ by the knot's height.
  EXPECT_NE(true_function(Benchmark::blocks, 0.05),
            true_function(Benchmark::blocks, 0.11));
}

TEST(SimdataTest, HeavisineFormula) {
  // heavisine(t) = 4 sin(4 pi t) - sgn(t - 0.3) - sgn(0.72 - t).  At t = 0.5:
  // 4 sin(2 pi) = 0, sgn(0.2) = 1, sgn(0.22) = 1, so the value is -2.
  EXPECT_NEAR(true_function(Benchmark::heavisine, 0.5), -2.0, 1e-12);
  // At t = 0.1 the two sign terms cancel: +1 - 1 around 4 sin(0.4 pi).
  EXPECT_NEAR(true_function(Benchmark::heavisine, 0.1),
              4.0 * std::sin(0.4 * M_PI), 1e-12);
  // Jump of size 2 across t = 0.3 once the sine part is removed.
  const double lo = true_function(Benchmark::heavisine, 0.3 - 1e-9) -
                    4.0 * std::sin(4.0 * M_PI * (0.3 - 1e-9));
  const double hi = true_function(Benchmark::heavisine, 0.3 + 1e-9) -
                    4.0 * std::sin(4.0 * M_PI * (0.3 + 1e-9));
  EXPECT_NEAR(lo - hi, 2.0, 1e-6);
}

TEST(SimdataTest, DopplerEnvelope) {
  EXPECT_EQ(true_function(Benchmark::doppler, 0.0), 0.0);
  EXPECT_EQ(true_function(Benchmark::doppler, 1.0), 0.0);
  for (int j = 1; j < 100; ++j) {
    const double t = j / 100.0;
    EXPECT_LE(std::abs(true_function(Benchmark::doppler, t)),
              std::sqrt(t * (1.0 - t)) + 1e-15);
  }
}

TEST(SimdataTest, MakeDatasetGrid) {
  const auto d = make_dataset(Benchmark::heavisine, 16, 7.0, 5);
  ASSERT_EQ(d.series.size(), 16u);
  for (int j = 0; j < 16; ++j)
    EXPECT_DOUBLE_EQ(d.series.t[j], double(j + 1) / 16.0);
  EXPECT_DOUBLE_EQ(d.series.t.back(), 1.0);

  EXPECT_THROW(make_dataset(Benchmark::blocks, 7, 7.0, 1), ngp::ValidationError);
  EXPECT_THROW(make_dataset(Benchmark::blocks, 64, 0.0, 1), ngp::ValidationError);
  EXPECT_THROW(make_dataset(Benchmark::blocks, 64, -3.0, 1), ngp::ValidationError);

  ngp::simdata::BenchmarkSpec spec;
  spec.function = Benchmark::doppler;
  spec.j_points = 8;
  spec.seed = 1;
  EXPECT_EQ(make_dataset(spec).series.size(), 8u);
  spec.j_points = 7;
  EXPECT_THROW(make_dataset(spec), ngp::ValidationError);
}

TEST(SimdataTest, NoiseCalibration) {
  for (Benchmark f : ngp::simdata::all_benchmarks()) {
    const auto d = make_dataset(f, 128, 7.0, 3);
    EXPECT_NEAR(ngp::simdata::sample_sd(d.truth), 7.0, 1e-9);
    EXPECT_NEAR(d.sigma_eps, 1.0, 1e-9);
    EXPECT_GT(d.scale, 0.0);
  }
  const auto d = make_dataset(Benchmark::bumps, 64, 14.0, 3);
  EXPECT_NEAR(d.sigma_eps, 0.5, 1e-9);
}

TEST(SimdataTest, LargeSnrRecoversTruth) {
  const auto d = make_dataset(Benchmark::doppler, 64, 1e12, 9);
  for (int j = 0; j < 64; ++j) EXPECT_NEAR(d.series.y[j], d.truth[j], 1e-9);
}

TEST(SimdataTest, DeterminismUnderSeed) {
  const auto d1 = make_dataset(Benchmark::blocks, 64, 7.0, 11);
  const auto d2 = make_dataset(Benchmark::blocks, 64, 7.0, 11);
  const auto d3 = make_dataset(Benchmark::blocks, 64, 7.0, 12);
  int diffs = 0;
  for (int j = 0; j < 64; ++j) {
    EXPECT_EQ(d1.series.y[j], d2.series.y[j]);
    EXPECT_EQ(d1.truth[j], d3.truth[j]);  // truth independent of the seed
    if (d1.series.y[j] != d3.series.y[j]) ++diffs;
  }
  EXPECT_GT(diffs, 0);
}

TEST(SimdataTest, NoiseRatioMonteCarlo) {
  const int J = 10000;
  const auto d = make_dataset(Benchmark::blocks, J, 7.0, 17);
  std::vector<double> noise(J);
  for (int j = 0; j < J; ++j) noise[j] = d.series.y[j] - d.truth[j];
  const double ratio =
      ngp::simdata::sample_sd(noise) / ngp::simdata::sample_sd(d.truth);
  EXPECT_GT(ratio, (1.0 / 7.0) * 0.97);
  EXPECT_LT(ratio, (1.0 / 7.0) * 1.03);
}

TEST(SimdataTest, MseValues) {
  std::vector<double> truth{1.0, -2.0, 0.5};
  EXPECT_DOUBLE_EQ(ngp::simdata::mse(truth, truth), 0.0);
  std::vector<double> off{2.5, -0.5, 2.0};  // constant offset 1.5
  EXPECT_DOUBLE_EQ(ngp::simdata::mse(off, truth), 2.25);
  EXPECT_DOUBLE_EQ(ngp::simdata::mse({1.0, 2.0}, {0.0, 0.0}), 2.5);
  EXPECT_THROW(ngp::simdata::mse({1.0}, truth), ngp::ValidationError);
}

// The property the nGP targets: curvature activity concentrated in part of
// the domain.  Split second differences into tenths and compare variances.
TEST(SimdataTest, LocalSmoothnessVariesAcrossDomain) {
  const int J = 1000;
  for (Benchmark f : ngp::simdata::all_benchmarks()) {
    std::vector<double> u(J);
    for (int j = 0; j < J; ++j) u[j] = true_function(f, double(j + 1) / J);
    std::vector<double> d2(J - 2);
    for (int j = 1; j + 1 < J; ++j) d2[j - 1] = u[j + 1] - 2.0 * u[j] + u[j - 1];

    const std::size_t chunk = d2.size() / 10;
    double vmin = 1e300, vmax = 0.0;
    for (int c = 0; c < 10; ++c) {
      const auto begin = d2.begin() + c * chunk;
      const std::vector<double> piece(begin, begin + chunk);
      const double sd = ngp::simdata::sample_sd(piece);
      vmin = std::min(vmin, sd * sd);
      vmax = std::max(vmax, sd * sd);
    }
    EXPECT_GT(vmax, 0.0) << ngp::simdata::name_of(f);
    if (vmin > 0.0)
      EXPECT_GE(vmax / vmin, 10.0) << ngp::simdata::name_of(f);
    // vmin == 0 (a decile with no curvature at all) is the extreme case.
  }
}

TEST(SimdataTest, FixtureFileMatchesTables) {
  const std::string path = std::string(NGP_FIXTURE_DIR) + "/dj_function_tables.txt";
  std::ifstream in(path);
  ASSERT_TRUE(in.good()) << path;

  std::map<std::string, std::map<std::string, std::vector<double>>> tables;
  std::string line, current;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "function") {
      ss >> current;
      continue;
    }
    std::vector<double> vals;
    double v;
    while (ss >> v) vals.push_back(v);
    tables[current][key] = vals;
  }

  const auto check = [&](const std::string& name, const char* field,
                         const std::vector<double>& expect) {
    const auto& got = tables.at(name).at(field);
    ASSERT_EQ(got.size(), expect.size()) << name << " " << field;
    for (std::size_t i = 0; i < expect.size(); ++i)
      EXPECT_DOUBLE_EQ(got[i], expect[i]) << name << " " << field << "[" << i << "]";
  };
  check("blocks", "knots", ngp::simdata::blocks_table().knots);
  check("blocks", "heights", ngp::simdata::blocks_table().heights);
  EXPECT_EQ(tables.at("blocks").count("widths"), 0u);
  check("bumps", "knots", ngp::simdata::bumps_table().knots);
  check("bumps", "heights", ngp::simdata::bumps_table().heights);
  check("bumps", "widths", ngp::simdata::bumps_table().widths);
}
