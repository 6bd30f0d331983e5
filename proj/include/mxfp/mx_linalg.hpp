// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "mxfp/block_quant.hpp"
#include "mxfp/error.hpp"
#include "mxfp/matrix.hpp"
#include "mxfp/minifloat.hpp"
#include "mxfp/scaling.hpp"

namespace mxfp {

enum class MmaPath : std::uint8_t {
  ExactScaled,    // per-block code dot products, scaled by both block scales
  Bf16Emulation,  // dequantize, round to bf16, binary32-accumulating matmul
};

constexpr std::string_view to_string(MmaPath path) {
  return path == MmaPath::ExactScaled ? "exact" : "bf16";
}

inline std::optional<MmaPath> parse_mma_path(std::string_view text) {
  if (text == "exact") return MmaPath::ExactScaled;
  if (text == "bf16") return MmaPath::Bf16Emulation;
  return std::nullopt;
}

/// Only one accumulation order exists: an inner binary32 sum per 32-element
/// block, then a binary32 running sum over blocks in increasing order.
enum class Accumulation : std::uint8_t { SequentialBlocks };

struct MmaConfig {
  MmaPath path = MmaPath::ExactScaled;
  Accumulation accumulation = Accumulation::SequentialBlocks;
};

struct MmaDiagnostics {
  std::size_t n_bf16_overflow = 0;  // finite operands that became Inf in the bf16 cast
};

/// Up to 32 codes sharing one scale.
struct MxBlock {
  ScaleByte scale;
  std::uint8_t length = 0;
  std::array<std::uint8_t, kBlockSize> codes{};
};

/// A run of blocks in one format: one row of a Row-blocked tensor or one
/// column of a Col-blocked tensor.
struct MxVector {
  Format format = Format::E4M3;
  std::vector<MxBlock> blocks;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.length;
    return n;
  }
};

/// Line `index` of `q` along its blocking axis (a row for Row tensors, a
/// column for Col tensors).
inline MxVector line_vector(const MxTensor& q, std::size_t index) {
  MxVector v;
  v.format = q.format;
  const std::size_t per_line = q.blocks_per_line();
  const std::size_t length = q.line_length();
  v.blocks.resize(per_line);
  for (std::size_t b = 0; b < per_line; ++b) {
    MxBlock& blk = v.blocks[b];
    blk.scale = q.scales[index * per_line + b];
    const std::size_t begin = b * kBlockSize;
    blk.length = static_cast<std::uint8_t>(std::min(kBlockSize, length - begin));
    for (std::size_t k = 0; k < blk.length; ++k) {
      const std::size_t pos = begin + k;
      blk.codes[k] = q.axis == Axis::Row ? q.codes[index * q.cols + pos] : q.codes[pos * q.cols + index];
    }
  }
  return v;
}

/// Dot product of two MX vectors with identical block boundaries:
///   sum_b  2^(Xa_b + Xb_b) * (sum_i decode(a_i) * decode(b_i))
/// where the inner sums, the products and the outer sum are binary32 and the
/// power-of-two scaling is a single ldexp on the block sum.
inline float mx_dot(const MxVector& a, const MxVector& b) {
  if (a.blocks.size() != b.blocks.size())
    throw Error(ErrorCode::LengthMismatch, "operands have different block counts", "blocks");
  for (std::size_t i = 0; i < a.blocks.size(); ++i)
    if (a.blocks[i].length != b.blocks[i].length)
      throw Error(ErrorCode::LengthMismatch, "operand block boundaries differ", "blocks");

  const auto& ta = detail::decode_table<float>(a.format);
  const auto& tb = detail::decode_table<float>(b.format);
  float acc = 0.0f;
  bool poisoned = false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const MxBlock& ba = a.blocks[i];
    const MxBlock& bb = b.blocks[i];
    if (ba.scale.is_nan() || bb.scale.is_nan()) {
      poisoned = true;
      continue;
    }
    float inner = 0.0f;
    for (std::size_t k = 0; k < ba.length; ++k) inner += ta[ba.codes[k]] * tb[bb.codes[k]];
    acc += std::ldexp(inner, ba.scale.exponent() + bb.scale.exponent());
  }
  return poisoned ? std::numeric_limits<float>::quiet_NaN() : acc;
}

/// Binary32 product of a (M x K) and b (K x N) accumulated in the MX order:
/// per-block inner sums over `block` consecutive k, then a running sum over
/// blocks.
template <typename Real>
Matrix<Real> blocked_matmul(const Matrix<Real>& a, const Matrix<Real>& b, std::size_t block = kBlockSize) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::LengthMismatch, "inner dimensions differ", "cols");
  const Matrix<Real> bt = transpose(b);
  Matrix<Real> out(a.rows(), b.cols());
  const std::size_t k_total = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      const auto bcol = bt.row(j);
      Real acc = 0;
      for (std::size_t begin = 0; begin < k_total; begin += block) {
        const std::size_t end = std::min(k_total, begin + block);
        Real inner = 0;
        for (std::size_t k = begin; k < end; ++k) inner += arow[k] * bcol[k];
        acc += inner;
      }
      out(i, j) = acc;
    }
  }
  return out;
}

namespace detail {

inline Matrix<float> dequantize_bf16(const MxTensor& q, MmaDiagnostics* diag) {
  Matrix<float> out(q.rows, q.cols);
  auto values = out.values();
  const auto& table = decode_table<double>(q.format);
  const std::size_t per_line = q.blocks_per_line();
  for_each_block(q.rows, q.cols, q.axis, [&](std::size_t line, std::size_t b, auto idx) {
    const ScaleByte scale = q.scales[line * per_line + b];
    for (std::size_t i : idx) {
      if (scale.is_nan()) {
        values[i] = std::numeric_limits<float>::quiet_NaN();
        continue;
      }
      const double decoded = table[q.codes[i]];
      const float rounded = round_bf16(static_cast<float>(std::ldexp(decoded, scale.exponent())));
      if (diag && std::isinf(rounded) && std::isfinite(decoded)) ++diag->n_bf16_overflow;
      values[i] = rounded;
    }
  });
  return out;
}

}  // namespace detail

/// C = A x B for A blocked along its rows and B blocked along its columns
/// (both along the contraction dimension). Any other pairing is the wrong
/// tensor copy and raises AxisMismatch, as does a contraction-length mismatch.
inline Matrix<float> mx_matmul(const MxTensor& a, const MxTensor& b, MmaConfig cfg = {},
                               MmaDiagnostics* diag = nullptr) {
  if (a.axis != Axis::Row)
    throw Error(ErrorCode::AxisMismatch, "left operand must be blocked along rows", "a.axis");
  if (b.axis != Axis::Col)
    throw Error(ErrorCode::AxisMismatch, "right operand must be blocked along columns", "b.axis");
  if (a.cols != b.rows)
    throw Error(ErrorCode::AxisMismatch, "contraction lengths differ (" + std::to_string(a.cols) + " vs " +
                                             std::to_string(b.rows) + ")",
                "shape");

  if (cfg.path == MmaPath::Bf16Emulation)
    return blocked_matmul(detail::dequantize_bf16(a, diag), detail::dequantize_bf16(b, diag));

  std::vector<MxVector> rows(a.rows);
  std::vector<MxVector> cols(b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) rows[i] = line_vector(a, i);
  for (std::size_t j = 0; j < b.cols; ++j) cols[j] = line_vector(b, j);
  Matrix<float> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) out(i, j) = mx_dot(rows[i], cols[j]);
  return out;
}

/// Requantize a binary32 GEMM result for a consumer that wants MX input.
inline QuantizedTensor quantize_mma_output(const Matrix<float>& c, Axis axis, Format format, ScaleRounding mode) {
  return quantize_tensor(c, axis, format, mode);
}

/// Binary64 reference product (plain k-order), for error reports.
inline Matrix<double> reference_matmul(const Matrix<float>& a, const Matrix<float>& b) {
  return matmul(matrix_cast<double>(a), matrix_cast<double>(b));
}

}  // namespace mxfp
