// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// MXT container, all integers little-endian:
//
//   offset size field
//   0      4    magic "MXT1"
//   4      2    version (1)
//   6      1    kind: 0 = raw binary32, 1 = mx
//   7      1    format: 0..4 = E4M3, E5M2, E2M3, E3M2, E2M1; 255 for raw
//   8      1    axis: 0 = row, 1 = col (0 for raw)
//   9      1    scale_mode: 0 = round-up, 1 = ocp-floor (0 for raw)
//   10     6    reserved, zero
//   16     8    rows
//   24     8    cols
//   32          payload
//
// raw payload: rows*cols binary32 bit patterns, row-major.
// mx payload:  scale bytes (MxTensor layout), then rows*cols code bytes with
//              the code in the low bits.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mxfp/block_quant.hpp"
#include "mxfp/error.hpp"
#include "mxfp/matrix.hpp"

namespace mxfp::io {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'M', 'X', 'T', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 32;
inline constexpr std::uint8_t kKindRaw = 0;
inline constexpr std::uint8_t kKindMx = 1;
inline constexpr std::uint8_t kRawFormat = 255;

using Tensor = std::variant<Matrix<float>, MxTensor>;

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(in[offset + i]) << (8 * i));
  return value;
}

inline void put_header(std::vector<std::uint8_t>& out, std::uint8_t kind, std::uint8_t format, std::uint8_t axis,
                       std::uint8_t mode, std::uint64_t rows, std::uint64_t cols) {
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint16_t>(out, kVersion);
  out.push_back(kind);
  out.push_back(format);
  out.push_back(axis);
  out.push_back(mode);
  out.insert(out.end(), 6, 0);
  put_le<std::uint64_t>(out, rows);
  put_le<std::uint64_t>(out, cols);
}

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const char* field) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw Error(ErrorCode::LengthMismatch, "size overflows 64 bits", field);
  return a * b;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Matrix<float>& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 4 * m.size());
  detail::put_header(out, kKindRaw, kRawFormat, 0, 0, m.rows(), m.cols());
  for (float v : m.values()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline std::vector<std::uint8_t> encode(const MxTensor& q) {
  if (q.codes.size() != q.rows * q.cols || q.scales.size() != q.num_blocks())
    throw Error(ErrorCode::LengthMismatch, "MxTensor payload does not match its shape", "codes");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + q.scales.size() + q.codes.size());
  detail::put_header(out, kKindMx, static_cast<std::uint8_t>(q.format), static_cast<std::uint8_t>(q.axis),
                     static_cast<std::uint8_t>(q.mode), q.rows, q.cols);
  for (ScaleByte s : q.scales) out.push_back(s.bits);
  out.insert(out.end(), q.codes.begin(), q.codes.end());
  return out;
}

inline std::vector<std::uint8_t> encode(const Tensor& t) {
  return std::visit([](const auto& v) { return encode(v); }, t);
}

/// Parse an MXT image. Every failure names the offending header field.
inline Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize)
    throw Error(ErrorCode::LengthMismatch,
                "file is " + std::to_string(bytes.size()) + " bytes, shorter than the 32-byte header", "header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw Error(ErrorCode::BadMagic, "expected \"MXT1\"", "magic");
  const auto version = detail::get_le<std::uint16_t>(bytes, 4);
  if (version != kVersion)
    throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(version) + " is not supported",
                "version");
  const std::uint8_t kind = bytes[6];
  const std::uint8_t format = bytes[7];
  const std::uint8_t axis = bytes[8];
  const std::uint8_t mode = bytes[9];
  for (std::size_t i = 10; i < 16; ++i)
    if (bytes[i] != 0) throw Error(ErrorCode::InvalidField, "reserved header bytes must be zero", "reserved");
  const auto rows = detail::get_le<std::uint64_t>(bytes, 16);
  const auto cols = detail::get_le<std::uint64_t>(bytes, 24);
  if (rows == 0) throw Error(ErrorCode::InvalidField, "rows must be positive", "rows");
  if (cols == 0) throw Error(ErrorCode::InvalidField, "cols must be positive", "cols");
  const std::uint64_t elements = detail::checked_mul(rows, cols, "rows*cols");
  const std::size_t payload = bytes.size() - kHeaderSize;

  if (kind == kKindRaw) {
    if (format != kRawFormat)
      throw Error(ErrorCode::UnsupportedFormat, "raw tensors must use format byte 255", "format");
    if (axis != 0) throw Error(ErrorCode::InvalidField, "raw tensors must have axis byte 0", "axis");
    if (mode != 0) throw Error(ErrorCode::InvalidField, "raw tensors must have scale_mode byte 0", "scale_mode");
    const std::uint64_t expected = detail::checked_mul(elements, 4, "rows*cols");
    if (payload != expected)
      throw Error(ErrorCode::LengthMismatch,
                  "raw payload is " + std::to_string(payload) + " bytes, header implies " + std::to_string(expected),
                  "payload");
    Matrix<float> m(rows, cols);
    auto values = m.values();
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, kHeaderSize + 4 * i));
    return m;
  }
  if (kind != kKindMx) throw Error(ErrorCode::InvalidField, "unknown tensor kind " + std::to_string(kind), "kind");

  if (format >= kAllFormats.size())
    throw Error(ErrorCode::UnsupportedFormat, "format byte " + std::to_string(format) + " is not an MX format",
                "format");
  if (axis > 1) throw Error(ErrorCode::InvalidField, "axis byte " + std::to_string(axis), "axis");
  if (mode > 1) throw Error(ErrorCode::InvalidField, "scale_mode byte " + std::to_string(mode), "scale_mode");

  MxTensor q;
  q.rows = rows;
  q.cols = cols;
  q.axis = static_cast<Axis>(axis);
  q.format = static_cast<Format>(format);
  q.mode = static_cast<ScaleRounding>(mode);
  const std::uint64_t n_scales = q.num_blocks();
  if (payload != n_scales + elements)
    throw Error(ErrorCode::LengthMismatch,
                "mx payload is " + std::to_string(payload) + " bytes, header implies " +
                    std::to_string(n_scales + elements),
                "payload");
  const auto* p = bytes.data() + kHeaderSize;
  q.scales.resize(n_scales);
  for (std::size_t i = 0; i < n_scales; ++i) q.scales[i] = ScaleByte{p[i]};
  q.codes.assign(p + n_scales, p + n_scales + elements);
  const unsigned limit = format_info(q.format).num_codes();
  for (std::uint8_t c : q.codes)
    if (c >= limit) throw Error(ErrorCode::InvalidCode, "code byte has bits above the format width", "codes");
  return q;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing", "path");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string(), "path");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), "path");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode(t)); }

inline Tensor read(const std::filesystem::path& path) { return decode(read_bytes(path)); }

}  // namespace mxfp::io
