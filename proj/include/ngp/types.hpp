#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ngp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error taxonomy. The CLI maps these onto distinct exit codes:
// I/O and usage -> 2, input validation -> 3, numerical failure -> 4.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Observations (t_j, y_j), j = 1..J, with strictly increasing times.
struct TimeSeries {
  std::vector<double> t;
  std::vector<double> y;

  std::size_t size() const { return t.size(); }

  void validate() const {
    if (t.empty()) throw ValidationError("time series is empty");
    if (t.size() != y.size())
      throw ValidationError("time series has " + std::to_string(t.size()) +
                            " times but " + std::to_string(y.size()) + " values");
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (!std::isfinite(t[j]) || !std::isfinite(y[j]))
        throw ValidationError("non-finite entry at row " + std::to_string(j + 1));
      if (j > 0 && !(t[j] > t[j - 1])) {
        if (t[j] == t[j - 1])
          throw ValidationError("duplicate time " + std::to_string(t[j]));
        throw ValidationError("times not strictly increasing at t = " +
                              std::to_string(t[j]));
      }
    }
  }
};

// The process is anchored at an unobserved knot t_0 = 0 carrying the
// initial-value prior.  Observation times are shifted by this amount so the
// anchor precedes the first datum: no shift when t_1 > 0 already; otherwise
// the anchor sits one mean gap below t_1.  Shared by the state-space builder
// and the dense kernel paths so both see identical coordinates.
inline double origin_shift(const std::vector<double>& t) {
  if (t.empty()) throw ValidationError("origin_shift: empty time vector");
  if (t.front() > 0.0) return 0.0;
  double mean_gap = 1.0;
  if (t.size() > 1) mean_gap = (t.back() - t.front()) / double(t.size() - 1);
  if (!(mean_gap > 0.0)) mean_gap = 1.0;
  return t.front() - mean_gap;
}

inline std::vector<double> shifted_times(const std::vector<double>& t) {
  const double s = origin_shift(t);
  std::vector<double> out(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) out[j] = t[j] - s;
  return out;
}

// Single deterministic RNG stream; every stochastic routine draws from one of
// these in a fixed order, which is what makes seeded runs bit-reproducible.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }

  // Inverse gamma with density ~ x^{-shape-1} exp(-scale/x).
  double inv_gamma(double shape, double scale) {
    std::gamma_distribution<double> g(shape, 1.0 / scale);
    double draw = g(gen_);
    // Guard against underflow to 0 for tiny shapes; retry is fine since the
    // event has probability ~0 and the stream stays deterministic.
    while (!(draw > 0.0)) draw = g(gen_);
    return 1.0 / draw;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// splitmix64: used to derive independent replicate seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ngp
