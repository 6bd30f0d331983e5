// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mxfp/error.hpp"
#include "mxfp/matrix.hpp"
#include "mxfp/minifloat.hpp"
#include "mxfp/scaling.hpp"

namespace mxfp {

inline constexpr std::size_t kBlockSize = 32;

/// Direction along which consecutive elements share a scale. Row blocks run
/// along a row (the contraction dimension of a left GEMM operand); Col blocks
/// run down a column (the contraction dimension of a right operand).
enum class Axis : std::uint8_t { Row = 0, Col = 1 };

constexpr std::string_view to_string(Axis axis) { return axis == Axis::Row ? "row" : "col"; }

inline std::optional<Axis> parse_axis(std::string_view text) {
  if (text == "row") return Axis::Row;
  if (text == "col") return Axis::Col;
  return std::nullopt;
}

constexpr Axis flip(Axis axis) { return axis == Axis::Row ? Axis::Col : Axis::Row; }

/// Counters filled by quantize_tensor.
///
/// An element is saturated when its scaled magnitude |V/2^X| exceeds destmax
/// (the clamp changed it); landing exactly on destmax is not a saturation.
/// Flushed means a non-zero input came back as zero. Exact means the
/// dequantized binary32 value equals the input.
struct QuantStats {
  std::size_t n_elements = 0;
  std::size_t n_saturated = 0;
  std::size_t n_flushed_to_zero = 0;
  std::size_t n_exact = 0;
  std::size_t n_below_min_subnormal = 0;  // non-zero and |V/2^X| < min subnormal
  std::size_t n_blocks = 0;
  std::size_t n_saturated_blocks = 0;
  std::size_t n_special_blocks = 0;  // blocks poisoned by NaN/Inf input
  double sum_sq_error = 0.0;
  double sum_sq_signal = 0.0;

  double mse() const { return n_elements == 0 ? 0.0 : sum_sq_error / static_cast<double>(n_elements); }

  /// 10 log10(signal / error); empty when either power is zero.
  std::optional<double> sqnr_db() const {
    if (sum_sq_signal <= 0.0 || sum_sq_error <= 0.0 || !std::isfinite(sum_sq_error)) return std::nullopt;
    return 10.0 * std::log10(sum_sq_signal / sum_sq_error);
  }

  QuantStats& operator+=(const QuantStats& o) {
    n_elements += o.n_elements;
    n_saturated += o.n_saturated;
    n_flushed_to_zero += o.n_flushed_to_zero;
    n_exact += o.n_exact;
    n_below_min_subnormal += o.n_below_min_subnormal;
    n_blocks += o.n_blocks;
    n_saturated_blocks += o.n_saturated_blocks;
    n_special_blocks += o.n_special_blocks;
    sum_sq_error += o.sum_sq_error;
    sum_sq_signal += o.sum_sq_signal;
    return *this;
  }
};

/// A 2-D tensor in MX form. Codes are stored row-major in the original shape.
/// Scales are laid out line by line: for Row axis scales[r * nb + b] covers
/// row r, columns [32b, 32b+32); for Col axis scales[c * nb + b] covers
/// column c, rows [32b, 32b+32).
struct MxTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Axis axis = Axis::Row;
  Format format = Format::E4M3;
  ScaleRounding mode = ScaleRounding::RoundUp;
  std::vector<std::uint8_t> codes;
  std::vector<ScaleByte> scales;

  std::size_t num_lines() const { return axis == Axis::Row ? rows : cols; }
  std::size_t line_length() const { return axis == Axis::Row ? cols : rows; }
  std::size_t blocks_per_line() const { return (line_length() + kBlockSize - 1) / kBlockSize; }
  std::size_t num_blocks() const { return num_lines() * blocks_per_line(); }

  ScaleByte scale_at(std::size_t i, std::size_t j) const {
    return axis == Axis::Row ? scales[i * blocks_per_line() + j / kBlockSize]
                             : scales[j * blocks_per_line() + i / kBlockSize];
  }
  ElementCode code_at(std::size_t i, std::size_t j) const { return {codes[i * cols + j], format}; }

  friend bool operator==(const MxTensor&, const MxTensor&) = default;
};

inline std::size_t expected_scale_count(std::size_t rows, std::size_t cols, Axis axis) {
  const std::size_t lines = axis == Axis::Row ? rows : cols;
  const std::size_t length = axis == Axis::Row ? cols : rows;
  return lines * ((length + kBlockSize - 1) / kBlockSize);
}

struct QuantizedTensor {
  MxTensor tensor;
  QuantStats stats;
};

namespace detail {

// Walks the blocks of a rows x cols tensor along `axis`, calling
// fn(line, block, flat_indices) with the row-major indices of each block.
template <typename Fn>
void for_each_block(std::size_t rows, std::size_t cols, Axis axis, Fn&& fn) {
  const std::size_t lines = axis == Axis::Row ? rows : cols;
  const std::size_t length = axis == Axis::Row ? cols : rows;
  const std::size_t per_line = (length + kBlockSize - 1) / kBlockSize;
  std::size_t index[kBlockSize];
  for (std::size_t line = 0; line < lines; ++line) {
    for (std::size_t b = 0; b < per_line; ++b) {
      const std::size_t begin = b * kBlockSize;
      const std::size_t n = std::min(kBlockSize, length - begin);
      for (std::size_t k = 0; k < n; ++k)
        index[k] = axis == Axis::Row ? line * cols + begin + k : (begin + k) * cols + line;
      fn(line, b, std::span<const std::size_t>(index, n));
    }
  }
}

}  // namespace detail

/// Quantize `source` into K=32 blocks along `axis`.
///
/// Partial trailing blocks take their scale from the elements present. Each
/// element is scaled by an exact exponent shift in binary64 before rounding.
/// A block containing NaN or Inf gets the NaN scale byte and NaN codes; for
/// formats without a NaN encoding this throws NonRepresentableSpecial.
inline QuantizedTensor quantize_tensor(const Matrix<float>& source, Axis axis, Format format,
                                       ScaleRounding mode) {
  if (source.empty()) throw Error(ErrorCode::EmptyTensor, "cannot quantize an empty tensor", "tensor");
  const auto& fmt = format_info(format);

  QuantizedTensor out;
  MxTensor& t = out.tensor;
  QuantStats& st = out.stats;
  t.rows = source.rows();
  t.cols = source.cols();
  t.axis = axis;
  t.format = format;
  t.mode = mode;
  t.codes.assign(source.size(), 0);
  t.scales.assign(t.num_blocks(), ScaleByte{0});

  const auto values = source.values();
  const std::size_t per_line = t.blocks_per_line();
  const auto& table = detail::decode_table<double>(format);

  detail::for_each_block(t.rows, t.cols, axis, [&](std::size_t line, std::size_t b, auto idx) {
    ++st.n_blocks;
    st.n_elements += idx.size();
    float amax = 0.0f;
    bool special = false;
    for (std::size_t i : idx) {
      const float v = values[i];
      if (!std::isfinite(v)) special = true;
      else amax = std::max(amax, std::fabs(v));
    }

    if (special) {
      if (!fmt.has_nan())
        throw Error(ErrorCode::NonRepresentableSpecial,
                    std::string(fmt.name) + " has no NaN encoding for a NaN/Inf block", "tensor");
      t.scales[line * per_line + b] = ScaleByte::nan();
      for (std::size_t i : idx) t.codes[i] = *nan_bits(format);
      ++st.n_special_blocks;
      return;
    }

    const ScaleByte scale = compute_scale(amax, format, mode);
    t.scales[line * per_line + b] = scale;

    if (amax == 0.0f) {
      // Every code in an all-zero block is the +0 pattern.
      st.n_exact += idx.size();
      return;
    }

    const int x = scale.exponent();
    bool block_saturated = false;
    for (std::size_t i : idx) {
      const float v = values[i];
      const double scaled = std::ldexp(static_cast<double>(v), -x);
      const double scaled_mag = std::fabs(scaled);
      const std::uint8_t code = quantize(scaled, format).bits;
      t.codes[i] = code;

      const double decoded = table[code];
      const auto restored = static_cast<float>(std::ldexp(decoded, x));
      if (scaled_mag > fmt.destmax) {
        ++st.n_saturated;
        block_saturated = true;
      }
      if (v != 0.0f && decoded == 0.0) ++st.n_flushed_to_zero;
      if (v != 0.0f && scaled_mag < fmt.min_subnormal) ++st.n_below_min_subnormal;
      if (restored == v) ++st.n_exact;
      const double err = static_cast<double>(restored) - static_cast<double>(v);
      st.sum_sq_error += err * err;
      st.sum_sq_signal += static_cast<double>(v) * static_cast<double>(v);
    }
    if (block_saturated) ++st.n_saturated_blocks;
  });
  return out;
}

/// decode(code) * 2^X per element, formed exactly in binary64 and rounded
/// once to binary32. Elements under a NaN scale byte become NaN.
inline Matrix<float> dequantize_tensor(const MxTensor& q) {
  if (q.codes.size() != q.rows * q.cols || q.scales.size() != q.num_blocks())
    throw Error(ErrorCode::LengthMismatch, "MxTensor payload does not match its shape", "codes");
  Matrix<float> out(q.rows, q.cols);
  auto values = out.values();
  const auto& table = detail::decode_table<double>(q.format);
  const std::size_t per_line = q.blocks_per_line();
  detail::for_each_block(q.rows, q.cols, q.axis, [&](std::size_t line, std::size_t b, auto idx) {
    const ScaleByte scale = q.scales[line * per_line + b];
    for (std::size_t i : idx) {
      values[i] = scale.is_nan() ? std::numeric_limits<float>::quiet_NaN()
                                 : static_cast<float>(std::ldexp(table[q.codes[i]], scale.exponent()));
    }
  });
  return out;
}

/// Swap the roles of rows and columns: codes are transposed, the axis flips,
/// and the scale array is reused as-is (the line layout is axis-relative).
inline MxTensor transpose(const MxTensor& q) {
  MxTensor t;
  t.rows = q.cols;
  t.cols = q.rows;
  t.axis = flip(q.axis);
  t.format = q.format;
  t.mode = q.mode;
  t.scales = q.scales;
  t.codes.resize(q.codes.size());
  for (std::size_t i = 0; i < q.rows; ++i)
    for (std::size_t j = 0; j < q.cols; ++j) t.codes[j * t.cols + i] = q.codes[i * q.cols + j];
  return t;
}

struct DualCopies {
  QuantizedTensor row;
  QuantizedTensor col;
};

/// Row-blocked and column-blocked copies, both taken from the binary32 source.
inline DualCopies quantize_both_axes(const Matrix<float>& source, Format format, ScaleRounding mode) {
  return {quantize_tensor(source, Axis::Row, format, mode), quantize_tensor(source, Axis::Col, format, mode)};
}

}  // namespace mxfp
