#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace inkpipe {

enum class ErrorCode {
  InvalidArgument,
  OutOfBounds,
  ChannelMismatch,
  DimensionMismatch,
  InvalidOverlap,
  PlanMismatch,
  LengthMismatch,
  Empty,
  OutOfRangeRating,
  HandshakeFailed,
  SpawnFailed,
  VersionMismatch,
  BackendIo,
  ShapeViolation,
  ProtocolError,
  Io,
  Decode,
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidOverlap: return "InvalidOverlap";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::OutOfRangeRating: return "OutOfRangeRating";
    case ErrorCode::HandshakeFailed: return "HandshakeFailed";
    case ErrorCode::SpawnFailed: return "SpawnFailed";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::BackendIo: return "BackendIo";
    case ErrorCode::ShapeViolation: return "ShapeViolation";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Decode: return "Decode";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace inkpipe
