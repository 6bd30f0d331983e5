// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mxfp;

namespace {

Matrix<float> filled(std::size_t rows, std::size_t cols, float v) {
  Matrix<float> m(rows, cols);
  for (float& x : m.values()) x = v;
  return m;
}

void expect_same_tensor(const MxTensor& a, const MxTensor& b) {
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.cols, b.cols);
  EXPECT_EQ(a.axis, b.axis);
  EXPECT_EQ(a.codes, b.codes);
  EXPECT_EQ(a.scales, b.scales);
}

}  // namespace

TEST(QuantizeTensor, AllOnesBlockIsExact) {
  const auto q = quantize_tensor(filled(1, 32, 1.0f), Axis::Row, Format::E4M3, ScaleRounding::RoundUp);
  ASSERT_EQ(q.tensor.scales.size(), 1u);
  EXPECT_EQ(q.tensor.scales[0].exponent(), -8);
  EXPECT_EQ(q.tensor.scales[0].bits, 119);
  for (std::uint8_t c : q.tensor.codes) EXPECT_EQ(decode(ElementCode{c, Format::E4M3}), 256.0);
  const auto d = dequantize_tensor(q.tensor);
  for (float v : d.values()) EXPECT_EQ(v, 1.0f);
  EXPECT_EQ(q.stats.n_exact, 32u);
  EXPECT_EQ(q.stats.n_saturated, 0u);
  EXPECT_EQ(q.stats.sum_sq_error, 0.0);
}

TEST(QuantizeTensor, AllZeroBlock) {
  for (auto mode : {ScaleRounding::RoundUp, ScaleRounding::OcpFloor}) {
    const auto q = quantize_tensor(filled(1, 32, 0.0f), Axis::Row, Format::E4M3, mode);
    EXPECT_EQ(q.tensor.scales[0].bits, 0);
    for (std::uint8_t c : q.tensor.codes) EXPECT_EQ(c, 0);
    EXPECT_FALSE(q.stats.sqnr_db().has_value());
  }
}

TEST(QuantizeTensor, PartialTrailingBlock) {
  Matrix<float> t(1, 33);
  for (std::size_t j = 0; j < 32; ++j) t(0, j) = 100.0f;
  t(0, 32) = 0.5f;
  const auto q = quantize_tensor(t, Axis::Row, Format::E4M3, ScaleRounding::RoundUp);
  ASSERT_EQ(q.tensor.scales.size(), 2u);
  EXPECT_EQ(q.tensor.scales[0], compute_scale(100.0f, Format::E4M3, ScaleRounding::RoundUp));
  EXPECT_EQ(q.tensor.scales[1], compute_scale(0.5f, Format::E4M3, ScaleRounding::RoundUp));
  EXPECT_EQ(dequantize_tensor(q.tensor)(0, 32), 0.5f);
}

TEST(QuantizeTensor, ScaleCounts) {
  const auto t = gaussian_matrix(32, 32, 1);
  const auto both = quantize_both_axes(t, Format::E4M3, ScaleRounding::RoundUp);
  EXPECT_EQ(both.row.tensor.scales.size(), 32u);
  EXPECT_EQ(both.col.tensor.scales.size(), 32u);
  EXPECT_EQ(expected_scale_count(70, 33, Axis::Row), 70u * 2);
  EXPECT_EQ(expected_scale_count(70, 33, Axis::Col), 33u * 3);
  const auto q = quantize_tensor(gaussian_matrix(70, 33, 2), Axis::Col, Format::E2M1, ScaleRounding::RoundUp);
  EXPECT_EQ(q.tensor.scales.size(), 99u);
}

TEST(QuantizeTensor, EmptyTensorThrows) {
  try {
    quantize_tensor(Matrix<float>(0, 4), Axis::Row, Format::E4M3, ScaleRounding::RoundUp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTensor);
  }
}

TEST(QuantizeTensor, UnitScaleDequantize) {
  MxTensor q;
  q.rows = 1;
  q.cols = 1;
  q.format = Format::E4M3;
  q.codes = {0x7E};
  q.scales = {ScaleByte{127}};
  EXPECT_EQ(dequantize_tensor(q)(0, 0), 448.0f);
  q.scales = {ScaleByte{255}};
  EXPECT_TRUE(std::isnan(dequantize_tensor(q)(0, 0)));
}

TEST(QuantizeTensor, NanPoisoning) {
  auto t = gaussian_matrix(2, 64, 3);
  t(0, 40) = std::numeric_limits<float>::quiet_NaN();
  t(1, 3) = std::numeric_limits<float>::infinity();
  for (Format f : {Format::E4M3, Format::E5M2}) {
    const auto q = quantize_tensor(t, Axis::Row, f, ScaleRounding::RoundUp);
    EXPECT_TRUE(q.tensor.scales[1].is_nan());
    EXPECT_TRUE(q.tensor.scales[2].is_nan());
    EXPECT_FALSE(q.tensor.scales[0].is_nan());
    EXPECT_FALSE(q.tensor.scales[3].is_nan());
    EXPECT_EQ(q.stats.n_special_blocks, 2u);
    for (std::size_t j = 32; j < 64; ++j) EXPECT_TRUE(std::isnan(decode(q.tensor.code_at(0, j))));
    const auto d = dequantize_tensor(q.tensor);
    EXPECT_TRUE(std::isnan(d(1, 0)));
    EXPECT_FALSE(std::isnan(d(1, 40)));
  }
  for (Format f : {Format::E2M3, Format::E3M2, Format::E2M1}) {
    try {
      quantize_tensor(t, Axis::Row, f, ScaleRounding::RoundUp);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonRepresentableSpecial);
    }
  }
}

TEST(QuantizeTensor, TransposeDuality) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 100);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    const auto t = gaussian_matrix(r, c, 1000 + trial, 3.0);
    const Format f = kAllFormats[trial % kAllFormats.size()];
    const auto mode = trial % 2 ? ScaleRounding::OcpFloor : ScaleRounding::RoundUp;
    for (Axis axis : {Axis::Row, Axis::Col}) {
      const auto direct = quantize_tensor(t, axis, f, mode).tensor;
      const auto via = transpose(quantize_tensor(mxfp::transpose(t), flip(axis), f, mode).tensor);
      expect_same_tensor(direct, via);
    }
  }
}

TEST(QuantizeTensor, OutlierLocality) {
  Matrix<float> t(64, 64);
  for (float& v : t.values()) v = 1.0f;
  t(5, 40) = 1.0e4f;
  const auto both = quantize_both_axes(t, Format::E4M3, ScaleRounding::RoundUp);
  const auto& row = both.row.tensor;
  const auto& col = both.col.tensor;
  const int normal = compute_scale(1.0f, Format::E4M3, ScaleRounding::RoundUp).exponent();
  const int outlier = compute_scale(1.0e4f, Format::E4M3, ScaleRounding::RoundUp).exponent();
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 64; ++j) {
      const bool in_row_block = i == 5 && j / 32 == 1;
      const bool in_col_block = j == 40 && i / 32 == 0;
      EXPECT_EQ(row.scale_at(i, j).exponent(), in_row_block ? outlier : normal);
      EXPECT_EQ(col.scale_at(i, j).exponent(), in_col_block ? outlier : normal);
    }
}

TEST(QuantizeTensor, RoundUpNeverSaturatesAndBoundsRelativeError) {
  for (Format f : kAllFormats) {
    const auto& fmt = format_info(f);
    const auto t = gaussian_matrix(128, 256, 9 + static_cast<unsigned>(f));
    const auto q = quantize_tensor(t, Axis::Row, f, ScaleRounding::RoundUp);
    EXPECT_EQ(q.stats.n_saturated, 0u);
    EXPECT_EQ(q.stats.n_saturated_blocks, 0u);
    const auto d = dequantize_tensor(q.tensor);
    const double bound = std::ldexp(1.0, -(fmt.man_bits + 1)) / (1.0 - std::ldexp(1.0, -(fmt.man_bits + 1))) * 2.0;
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) {
        const ScaleByte s = q.tensor.scale_at(i, j);
        EXPECT_LE(std::fabs(d(i, j)), fmt.destmax * decode_scale(s));
        // Only elements that land in the normal range of the format.
        const double scaled = std::fabs(std::ldexp(static_cast<double>(t(i, j)), -s.exponent()));
        if (scaled < std::ldexp(1.0, fmt.min_normal_exponent())) continue;
        EXPECT_LE(std::fabs(d(i, j) - t(i, j)) / std::fabs(t(i, j)), bound);
      }
  }
}

TEST(QuantizeTensor, StatsCountersAreConsistent) {
  const auto t = gaussian_matrix(64, 64, 4, 100.0);
  for (Format f : kAllFormats)
    for (auto mode : {ScaleRounding::RoundUp, ScaleRounding::OcpFloor}) {
      const auto s = quantize_tensor(t, Axis::Col, f, mode).stats;
      EXPECT_EQ(s.n_elements, t.size());
      EXPECT_LE(s.n_saturated + s.n_flushed_to_zero + s.n_exact, s.n_elements);
      EXPECT_LE(s.n_saturated_blocks, s.n_blocks);
    }
}

TEST(QuantizeTensor, SaturationIsNotCountedAtDestmax) {
  const auto q = quantize_tensor(filled(1, 32, 448.0f), Axis::Row, Format::E4M3, ScaleRounding::OcpFloor);
  EXPECT_EQ(q.stats.n_saturated, 0u);
  const auto q2 = quantize_tensor(filled(1, 32, 500.0f), Axis::Row, Format::E4M3, ScaleRounding::OcpFloor);
  EXPECT_EQ(q2.stats.n_saturated, 32u);
  EXPECT_EQ(q2.stats.n_saturated_blocks, 1u);
}

// Requantizing a dequantized tensor always reproduces the values, and under
// OcpFloor also the codes and scales.
TEST(Idempotence, ValuesAreStable) {
  for (Format f : kAllFormats)
    for (auto mode : {ScaleRounding::RoundUp, ScaleRounding::OcpFloor}) {
      const auto t = gaussian_matrix(96, 80, 21 + static_cast<unsigned>(f));
      const auto q = quantize_tensor(t, Axis::Row, f, mode).tensor;
      const auto d = dequantize_tensor(q);
      const auto q2 = quantize_tensor(d, Axis::Row, f, mode).tensor;
      EXPECT_EQ(dequantize_tensor(q2), d) << to_string(f) << " " << to_string(mode);
      if (mode == ScaleRounding::OcpFloor) expect_same_tensor(q, q2);
    }
}

// Under RoundUp a block whose scaled amax rounds down onto destmax/2 gets a
// smaller scale when requantized, so the representation changes even though
// the values do not.
TEST(Idempotence, RoundUpRepresentationCounterexample) {
  const auto q = quantize_tensor(filled(1, 32, 225.0f), Axis::Row, Format::E4M3, ScaleRounding::RoundUp).tensor;
  EXPECT_EQ(q.scales[0].exponent(), 0);
  EXPECT_EQ(decode(q.code_at(0, 0)), 224.0);
  const auto q2 =
      quantize_tensor(dequantize_tensor(q), Axis::Row, Format::E4M3, ScaleRounding::RoundUp).tensor;
  EXPECT_EQ(q2.scales[0].exponent(), -1);
  EXPECT_EQ(decode(q2.code_at(0, 0)), 448.0);
  EXPECT_EQ(dequantize_tensor(q2), dequantize_tensor(q));
}
