// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "mxfp/matrix.hpp"

namespace mxfp {

// std::normal_distribution is implementation-defined, so Gaussian samples are
// produced here with Box-Muller on top of mt19937_64 (whose output sequence is
// fixed by the standard). Reports record kName next to the seed.
class GaussianSource {
 public:
  static constexpr std::string_view kName = "mt19937_64/box-muller";

  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
  }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Matrix<float> gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                     double stddev = 1.0) {
  GaussianSource source(seed);
  Matrix<float> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(stddev * source());
  return m;
}

}  // namespace mxfp
