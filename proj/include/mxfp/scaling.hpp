// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>

#include "mxfp/error.hpp"
#include "mxfp/minifloat.hpp"

namespace mxfp {

/// UE8M0 shared scale: byte b in [0, 254] encodes 2^(b-127), 255 encodes NaN.
struct ScaleByte {
  std::uint8_t bits = 127;

  static constexpr std::uint8_t kNaN = 255;
  static constexpr int kBias = 127;
  static constexpr int kMinExponent = -127;
  static constexpr int kMaxExponent = 127;

  static constexpr ScaleByte from_exponent(int exponent) {
    return ScaleByte{static_cast<std::uint8_t>(std::clamp(exponent, kMinExponent, kMaxExponent) + kBias)};
  }
  static constexpr ScaleByte nan() { return ScaleByte{kNaN}; }

  constexpr bool is_nan() const { return bits == kNaN; }
  /// Unbiased exponent X; meaningless for the NaN byte.
  constexpr int exponent() const { return static_cast<int>(bits) - kBias; }

  friend bool operator==(const ScaleByte&, const ScaleByte&) = default;
};

enum class ScaleRounding : std::uint8_t {
  RoundUp = 0,   // ceil of log2(amax / destmax)
  OcpFloor = 1,  // floor(log2 amax) - floor(log2 destmax)
};

constexpr std::string_view to_string(ScaleRounding mode) {
  return mode == ScaleRounding::RoundUp ? "round-up" : "ocp-floor";
}

inline std::optional<ScaleRounding> parse_scale_rounding(std::string_view text) {
  if (text == "up" || text == "round-up") return ScaleRounding::RoundUp;
  if (text == "ocp-floor" || text == "ocp") return ScaleRounding::OcpFloor;
  return std::nullopt;
}

inline double decode_scale(ScaleByte s) {
  if (s.is_nan()) return std::numeric_limits<double>::quiet_NaN();
  return std::ldexp(1.0, s.exponent());
}

/// floor(log2(x)) read off the binary32 encoding; x must be positive and finite.
inline int floor_log2(float x) {
  const auto bits = std::bit_cast<std::uint32_t>(x);
  const int biased = static_cast<int>((bits >> 23) & 0xFFu);
  const std::uint32_t mantissa = bits & 0x7FFFFFu;
  if (biased != 0) return biased - 127;
  return (31 - std::countl_zero(mantissa)) - 149;
}

/// Mantissa fraction M of x = 2^A * 1.M (x > 0, finite), computed exactly.
inline double mantissa_fraction(double x) {
  int e = 0;
  const double f = std::frexp(x, &e);  // f in [0.5, 1)
  return 2.0 * f - 1.0;
}

namespace detail {

// ceil(log2(ratio)) from the bit pattern of a non-negative binary32 ratio that
// is at least 2^-127. Values that are not powers of two round up.
inline int ceil_log2_bits(float ratio) {
  const auto bits = std::bit_cast<std::uint32_t>(ratio);
  const int biased = static_cast<int>((bits >> 23) & 0xFFu);
  const std::uint32_t mantissa = bits & 0x7FFFFFu;
  if (biased != 0) return biased - 127 + (mantissa != 0 ? 1 : 0);
  // Subnormal ratio: value = mantissa * 2^-149.
  const int floor_exp = (31 - std::countl_zero(mantissa)) - 149;
  return floor_exp + (std::has_single_bit(mantissa) ? 0 : 1);
}

inline bool is_power_of_two(float x) {
  const auto bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t biased = (bits >> 23) & 0xFFu;
  const std::uint32_t mantissa = bits & 0x7FFFFFu;
  return biased != 0 ? mantissa == 0 : std::has_single_bit(mantissa);
}

}  // namespace detail

/// Shared block scale for a block whose absolute maximum is `amax`.
///
/// RoundUp works on the bit pattern of the binary32 quotient amax/destmax:
/// below 2^-127 it pins to 2^-127, otherwise a non-zero mantissa bumps the
/// exponent. A quotient that lands exactly on a power of two although the
/// division was inexact (only possible once the quotient is subnormal) is
/// also bumped, so amax / 2^X never exceeds destmax.
///
/// OcpFloor subtracts the binade of destmax from the binade of amax and may
/// map amax above destmax.
///
/// amax == 0 gives byte 0; NaN or Inf gives the NaN byte; negative amax throws.
inline ScaleByte compute_scale(float amax, Format format, ScaleRounding mode) {
  if (std::isnan(amax) || std::isinf(amax)) return ScaleByte::nan();
  if (amax < 0.0f) throw Error(ErrorCode::InvalidAmax, "block amax must be non-negative", "amax");
  if (amax == 0.0f) return ScaleByte{0};

  const auto& fmt = format_info(format);
  const auto destmax = static_cast<float>(fmt.destmax);

  if (mode == ScaleRounding::OcpFloor)
    return ScaleByte::from_exponent(floor_log2(amax) - floor_log2(destmax));

  const float ratio = amax / destmax;
  if (ratio < 0x1p-127f) return ScaleByte::from_exponent(ScaleByte::kMinExponent);
  int exponent = detail::ceil_log2_bits(ratio);
  if (detail::is_power_of_two(ratio) && ratio * destmax < amax) ++exponent;
  return ScaleByte::from_exponent(exponent);
}

}  // namespace mxfp
