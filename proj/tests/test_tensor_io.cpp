// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <functional>

#include <gtest/gtest.h>

#include "mxfp/mxfp.hpp"

using namespace mxfp;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mxfp_test_" + std::to_string(::getpid()) + "_" + name);
}

void expect_error(const std::vector<std::uint8_t>& bytes, ErrorCode code, const std::string& field) {
  try {
    io::decode(bytes);
    FAIL() << "decoded a corrupt image";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    EXPECT_EQ(e.field(), field) << e.what();
  }
}

std::vector<std::uint8_t> mx_image() {
  return io::encode(quantize_tensor(gaussian_matrix(40, 70, 2), Axis::Col, Format::E3M2, ScaleRounding::OcpFloor)
                        .tensor);
}

}  // namespace

TEST(TensorIo, RawRoundTripIsByteIdentical) {
  const auto m = gaussian_matrix(32, 32, 1);
  const auto path = temp_path("raw.mxt");
  io::write(path, m);
  const auto bytes = io::read_bytes(path);
  EXPECT_EQ(bytes.size(), 32u + 32 * 32 * 4);
  const auto back = io::read(path);
  ASSERT_TRUE(std::holds_alternative<Matrix<float>>(back));
  EXPECT_EQ(std::get<Matrix<float>>(back), m);
  EXPECT_EQ(io::encode(back), bytes);
  std::filesystem::remove(path);
}

TEST(TensorIo, MxRoundTripForEveryFormat) {
  for (Format f : kAllFormats)
    for (Axis axis : {Axis::Row, Axis::Col}) {
      const auto q = quantize_tensor(gaussian_matrix(33, 65, 4), axis, f, ScaleRounding::RoundUp).tensor;
      const auto bytes = io::encode(q);
      EXPECT_EQ(bytes.size(), 32 + q.scales.size() + q.codes.size());
      const auto back = io::decode(bytes);
      ASSERT_TRUE(std::holds_alternative<MxTensor>(back));
      EXPECT_EQ(std::get<MxTensor>(back), q);
      EXPECT_EQ(io::encode(back), bytes);
    }
}

TEST(TensorIo, HeaderLayout) {
  const auto bytes = mx_image();
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MXT1");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);  // mx
  EXPECT_EQ(bytes[7], 3);  // E3M2
  EXPECT_EQ(bytes[8], 1);  // col
  EXPECT_EQ(bytes[9], 1);  // ocp-floor
  EXPECT_EQ(bytes[16], 40);
  EXPECT_EQ(bytes[24], 70);
}

TEST(TensorIo, TruncatedFile) {
  auto bytes = mx_image();
  bytes.pop_back();
  expect_error(bytes, ErrorCode::LengthMismatch, "payload");
  bytes.resize(20);
  expect_error(bytes, ErrorCode::LengthMismatch, "header");
}

TEST(TensorIo, TrailingBytes) {
  auto bytes = io::encode(gaussian_matrix(3, 3, 1));
  bytes.push_back(0);
  expect_error(bytes, ErrorCode::LengthMismatch, "payload");
}

TEST(TensorIo, CorruptHeaders) {
  const auto good = mx_image();
  auto patch = [&](std::size_t offset, std::uint8_t value) {
    auto b = good;
    b[offset] = value;
    return b;
  };
  expect_error(patch(7, 9), ErrorCode::UnsupportedFormat, "format");
  expect_error(patch(0, 'Z'), ErrorCode::BadMagic, "magic");
  expect_error(patch(4, 2), ErrorCode::UnsupportedVersion, "version");
  expect_error(patch(6, 7), ErrorCode::InvalidField, "kind");
  expect_error(patch(8, 2), ErrorCode::InvalidField, "axis");
  expect_error(patch(9, 2), ErrorCode::InvalidField, "scale_mode");
  expect_error(patch(12, 1), ErrorCode::InvalidField, "reserved");
  // A row count that no longer matches the payload.
  expect_error(patch(16, 41), ErrorCode::LengthMismatch, "payload");
  auto zero_rows = good;
  std::fill(zero_rows.begin() + 16, zero_rows.begin() + 24, 0);
  expect_error(zero_rows, ErrorCode::InvalidField, "rows");
  // E3M2 codes are 6 bits wide.
  auto bad_code = good;
  bad_code.back() = 0x40;
  expect_error(bad_code, ErrorCode::InvalidCode, "codes");
  // Raw tensors must carry format 255.
  auto raw = io::encode(gaussian_matrix(2, 2, 1));
  raw[7] = 0;
  expect_error(raw, ErrorCode::UnsupportedFormat, "format");
}

TEST(TensorIo, MissingFile) {
  try {
    io::read(temp_path("does_not_exist.mxt"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}
