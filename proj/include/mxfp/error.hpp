// Copyright 2026 The mxfp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mxfp {

enum class ErrorCode {
  NonFiniteElement,
  InvalidAmax,
  NonRepresentableSpecial,
  InvalidCode,
  EmptyTensor,
  LengthMismatch,
  AxisMismatch,
  BadMagic,
  UnsupportedVersion,
  UnsupportedFormat,
  InvalidField,
  Io,
  GradcheckFailure,
  InvariantViolation,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteElement: return "NonFiniteElement";
    case ErrorCode::InvalidAmax: return "InvalidAmax";
    case ErrorCode::NonRepresentableSpecial: return "NonRepresentableSpecial";
    case ErrorCode::InvalidCode: return "InvalidCode";
    case ErrorCode::EmptyTensor: return "EmptyTensor";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AxisMismatch: return "AxisMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::InvalidField: return "InvalidField";
    case ErrorCode::Io: return "Io";
    case ErrorCode::GradcheckFailure: return "GradcheckFailure";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Single exception type for the library. `code()` identifies the failure,
/// `field()` names the offending field or tensor role when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace mxfp
