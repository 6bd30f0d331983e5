// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "mxfp/error.hpp"

namespace mxfp {

/// MX element data types. Underlying values follow the order of the format
/// reference table and are used verbatim in the MXT file header.
enum class Format : std::uint8_t { E4M3 = 0, E5M2 = 1, E2M3 = 2, E3M2 = 3, E2M1 = 4 };

inline constexpr std::array<Format, 5> kAllFormats = {Format::E4M3, Format::E5M2, Format::E2M3,
                                                      Format::E3M2, Format::E2M1};

/// How the all-ones exponent field is interpreted.
///  - IEEE: all-ones exponent is Inf (zero mantissa) or NaN.
///  - FiniteOnlyOneNaN: no Inf; only S.1111.111 is NaN, the rest are normals.
///  - FiniteOnly: every pattern is a finite number.
enum class SpecialConvention : std::uint8_t { IEEE, FiniteOnlyOneNaN, FiniteOnly };

struct MiniFloatFormat {
  Format id;
  std::string_view name;
  int exp_bits;
  int man_bits;
  int bias;
  SpecialConvention special;
  double destmax;
  double min_subnormal;

  constexpr int width() const { return 1 + exp_bits + man_bits; }
  constexpr int min_normal_exponent() const { return 1 - bias; }
  constexpr std::uint8_t sign_mask() const {
    return static_cast<std::uint8_t>(1u << (exp_bits + man_bits));
  }
  constexpr std::uint8_t magnitude_mask() const {
    return static_cast<std::uint8_t>(sign_mask() - 1u);
  }
  constexpr unsigned num_codes() const { return 1u << width(); }
  constexpr bool has_nan() const { return special != SpecialConvention::FiniteOnly; }

  /// Magnitude bits of the largest finite value.
  constexpr std::uint8_t max_finite_bits() const {
    const unsigned exp_ones = (1u << exp_bits) - 1u;
    const unsigned man_ones = (1u << man_bits) - 1u;
    switch (special) {
      case SpecialConvention::IEEE: return static_cast<std::uint8_t>(((exp_ones - 1u) << man_bits) | man_ones);
      case SpecialConvention::FiniteOnlyOneNaN: return static_cast<std::uint8_t>((exp_ones << man_bits) | (man_ones - 1u));
      case SpecialConvention::FiniteOnly: return magnitude_mask();
    }
    return 0;
  }

  double binades() const { return std::log2(destmax / min_subnormal); }
};

// destmax and min_subnormal are written out as in the reference table; tests
// check them against the decoded code space.
inline constexpr MiniFloatFormat kE4M3{Format::E4M3, "E4M3", 4, 3, 7, SpecialConvention::FiniteOnlyOneNaN,
                                       1.75 * 0x1p8, 0x1p-9};
inline constexpr MiniFloatFormat kE5M2{Format::E5M2, "E5M2", 5, 2, 15, SpecialConvention::IEEE,
                                       1.75 * 0x1p15, 0x1p-16};
inline constexpr MiniFloatFormat kE2M3{Format::E2M3, "E2M3", 2, 3, 1, SpecialConvention::FiniteOnly,
                                       1.875 * 0x1p2, 0x1p-3};
// Subnormal minimum 2^-4 follows from bias 3 and two mantissa bits.
inline constexpr MiniFloatFormat kE3M2{Format::E3M2, "E3M2", 3, 2, 3, SpecialConvention::FiniteOnly,
                                       1.75 * 0x1p4, 0x1p-4};
inline constexpr MiniFloatFormat kE2M1{Format::E2M1, "E2M1", 2, 1, 1, SpecialConvention::FiniteOnly,
                                       1.5 * 0x1p2, 0x1p-1};

constexpr const MiniFloatFormat& format_info(Format f) {
  switch (f) {
    case Format::E4M3: return kE4M3;
    case Format::E5M2: return kE5M2;
    case Format::E2M3: return kE2M3;
    case Format::E3M2: return kE3M2;
    case Format::E2M1: return kE2M1;
  }
  throw Error(ErrorCode::UnsupportedFormat, "unknown format tag", "format");
}

constexpr std::string_view to_string(Format f) { return format_info(f).name; }

/// Case-insensitive lookup ("e4m3", "E4M3").
inline std::optional<Format> parse_format(std::string_view text) {
  for (Format f : kAllFormats) {
    const auto name = format_info(f).name;
    if (name.size() == text.size() &&
        std::equal(name.begin(), name.end(), text.begin(), [](char a, char b) {
          return std::toupper(static_cast<unsigned char>(a)) == std::toupper(static_cast<unsigned char>(b));
        }))
      return f;
  }
  return std::nullopt;
}

/// A raw element bit pattern tagged with its format. Low `width()` bits are
/// significant; FP6/FP4 codes occupy one byte each.
struct ElementCode {
  std::uint8_t bits = 0;
  Format format = Format::E4M3;

  friend bool operator==(const ElementCode&, const ElementCode&) = default;
};

/// Canonical NaN pattern (positive sign) for formats that have one.
inline std::optional<std::uint8_t> nan_bits(Format f) {
  const auto& fmt = format_info(f);
  if (!fmt.has_nan()) return std::nullopt;
  return fmt.magnitude_mask();  // S.1111.111 for E4M3, S.11111.11 for E5M2
}

namespace detail {

inline double decode_bits(std::uint8_t bits, const MiniFloatFormat& fmt) {
  const unsigned man_mask = (1u << fmt.man_bits) - 1u;
  const unsigned exp_ones = (1u << fmt.exp_bits) - 1u;
  const bool negative = (bits & fmt.sign_mask()) != 0;
  const unsigned exp_field = (bits >> fmt.man_bits) & exp_ones;
  const unsigned man_field = bits & man_mask;

  if (exp_field == exp_ones) {
    if (fmt.special == SpecialConvention::IEEE) {
      if (man_field == 0)
        return negative ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
      return std::numeric_limits<double>::quiet_NaN();
    }
    if (fmt.special == SpecialConvention::FiniteOnlyOneNaN && man_field == man_mask)
      return std::numeric_limits<double>::quiet_NaN();
  }

  double magnitude;
  if (exp_field == 0) {
    magnitude = std::ldexp(static_cast<double>(man_field), fmt.min_normal_exponent() - fmt.man_bits);
  } else {
    const double significand = static_cast<double>((1u << fmt.man_bits) | man_field);
    magnitude = std::ldexp(significand, static_cast<int>(exp_field) - fmt.bias - fmt.man_bits);
  }
  return negative ? -magnitude : magnitude;
}

template <typename T>
std::array<T, 256> build_decode_table(const MiniFloatFormat& fmt) {
  std::array<T, 256> table{};
  table.fill(std::numeric_limits<T>::quiet_NaN());
  for (unsigned c = 0; c < fmt.num_codes(); ++c)
    table[c] = static_cast<T>(decode_bits(static_cast<std::uint8_t>(c), fmt));
  return table;
}

template <typename T>
const std::array<T, 256>& decode_table(Format f) {
  static const std::array<std::array<T, 256>, 5> tables = [] {
    std::array<std::array<T, 256>, 5> t{};
    for (Format g : kAllFormats) t[static_cast<std::size_t>(g)] = build_decode_table<T>(format_info(g));
    return t;
  }();
  return tables[static_cast<std::size_t>(f)];
}

inline double round_half_even(double q) {
  double whole = std::floor(q);
  const double frac = q - whole;
  if (frac > 0.5 || (frac == 0.5 && std::fmod(whole, 2.0) != 0.0)) whole += 1.0;
  return whole;
}

}  // namespace detail

/// Decoded value of `code`. NaN/Inf only for E4M3/E5M2 special patterns.
inline double decode(ElementCode code) {
  const auto& fmt = format_info(code.format);
  if (code.bits >= fmt.num_codes())
    throw Error(ErrorCode::InvalidCode, "code does not fit the format width", "bits");
  return detail::decode_table<double>(code.format)[code.bits];
}

/// Unchecked table lookup for hot loops; `bits` must fit the format width.
inline float decode_float(std::uint8_t bits, Format f) { return detail::decode_table<float>(f)[bits]; }

/// Saturating round-to-nearest-ties-to-even conversion of a finite binary64
/// value. Magnitudes above destmax clamp to destmax, magnitudes at or below
/// half the smallest subnormal become zero, and the sign of zero is kept.
///
/// All rounding is done on exact binary64 quantities: every midpoint of an
/// 8-bit-or-narrower format is representable, so there is no double rounding.
inline ElementCode quantize(double value, Format f) {
  if (!std::isfinite(value))
    throw Error(ErrorCode::NonFiniteElement, "cannot quantize a non-finite value", "value");
  const auto& fmt = format_info(f);
  const std::uint8_t sign = std::signbit(value) ? fmt.sign_mask() : 0;
  const double magnitude = std::fabs(value);

  if (magnitude >= fmt.destmax) return {static_cast<std::uint8_t>(sign | fmt.max_finite_bits()), f};
  if (magnitude == 0.0) return {sign, f};

  int frexp_exp = 0;
  std::frexp(magnitude, &frexp_exp);
  const int emin = fmt.min_normal_exponent();
  const int exponent = std::max(frexp_exp - 1, emin);

  // magnitude / quantum is exact: dividing by a power of two that is <= the
  // magnitude's own binade cannot underflow.
  const double steps = detail::round_half_even(std::ldexp(magnitude, fmt.man_bits - exponent));

  // steps lies in [2^m, 2^(m+1)] for normal binades and [0, 2^m] at the
  // subnormal binade; a carry into the next binade falls out of the addition.
  const long long unit = 1LL << fmt.man_bits;
  const long long magnitude_bits =
      (static_cast<long long>(exponent - emin + 1) << fmt.man_bits) + static_cast<long long>(steps) - unit;
  const auto clamped = std::min<long long>(magnitude_bits, fmt.max_finite_bits());
  return {static_cast<std::uint8_t>(sign | static_cast<std::uint8_t>(clamped)), f};
}

/// Round a binary32 value to bfloat16 precision (RN-ties-even), returned as
/// binary32. NaN stays NaN; overflow goes to Inf as an IEEE cast would.
inline float round_bf16(float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  if (std::isnan(value)) return std::bit_cast<float>((bits | 0x00400000u) & 0xFFFF0000u);
  const std::uint32_t lsb = (bits >> 16) & 1u;
  bits += 0x7FFFu + lsb;
  return std::bit_cast<float>(bits & 0xFFFF0000u);
}

}  // namespace mxfp
