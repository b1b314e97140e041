#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mhng {

enum class ErrorCode {
  NotPositiveDefinite,
  DimensionMismatch,
  InvalidDof,
  AllNegInfinity,
  IndexOutOfRange,
  KMismatch,
  ShapeMismatch,
  NumericalFailure,
  LengthMismatch,
  DegenerateAgreement,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  InsufficientClassCount,
  UnreadableImage,
  EmptyClass,
  MalformedFrame,
  UnknownKind,
  OversizeFrame,
  HandshakeMismatch,
  PeerDisconnected,
  Timeout,
  InvalidConfig,
  Io,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace mhng
