// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

// Quantize two Gaussian matrices to MXFP8, multiply them on both emulation
// paths and compare against a binary64 reference.

#include <cmath>
#include <cstdio>

#include "mxfp/mxfp.hpp"

int main() {
  using namespace mxfp;

  const auto a = gaussian_matrix(64, 256, 1);
  const auto b = gaussian_matrix(256, 48, 2);

  // A is consumed along its rows, B along its columns.
  const auto qa = quantize_tensor(a, Axis::Row, Format::E4M3, ScaleRounding::RoundUp);
  const auto qb = quantize_tensor(b, Axis::Col, Format::E4M3, ScaleRounding::RoundUp);
  std::printf("A: %zu blocks, sqnr %.2f dB\n", qa.stats.n_blocks, qa.stats.sqnr_db().value_or(0.0));
  std::printf("B: %zu blocks, sqnr %.2f dB\n", qb.stats.n_blocks, qb.stats.sqnr_db().value_or(0.0));

  const auto ref = reference_matmul(a, b);
  for (MmaPath path : {MmaPath::ExactScaled, MmaPath::Bf16Emulation}) {
    const auto c = mx_matmul(qa.tensor, qb.tensor, MmaConfig{path});
    double err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double d = c.values()[i] - ref.values()[i];
      err += d * d;
      norm += ref.values()[i] * ref.values()[i];
    }
    std::printf("%-5s relative error %.4e\n", std::string(to_string(path)).c_str(), std::sqrt(err / norm));
  }

  // The transpose of a row-blocked tensor is a column-blocked tensor with the
  // same scales, so no requantization is needed for A^T.
  const auto qat = transpose(qa.tensor);
  std::printf("transpose: %zux%zu axis=%s\n", qat.rows, qat.cols, std::string(to_string(qat.axis)).c_str());

  // Element-level API.
  for (double x : {0.3, 1.0, 300.0, 1000.0}) {
    const ElementCode c = quantize(x, Format::E4M3);
    std::printf("e4m3(%g) = 0x%02x -> %g\n", x, c.bits, decode(c));
  }
  return 0;
}
