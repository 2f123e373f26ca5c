#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ignn/tensor.hpp"

namespace ignn {

/// Seeded generator with platform-independent real conversions, so a seed
/// reproduces the same parameters and datasets everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = uniform(lo, hi);
    return m;
  }
  /// Glorot/Xavier uniform initialisation for a fan_in x fan_out weight.
  Matrix glorot(std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_matrix(fan_in, fan_out, -limit, limit);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ignn
