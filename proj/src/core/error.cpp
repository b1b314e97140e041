#include "error.hpp"

namespace mhng {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidDof: return "InvalidDof";
    case ErrorCode::AllNegInfinity: return "AllNegInfinity";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::KMismatch: return "KMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateAgreement: return "DegenerateAgreement";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::InsufficientClassCount: return "InsufficientClassCount";
    case ErrorCode::UnreadableImage: return "UnreadableImage";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::OversizeFrame: return "OversizeFrame";
    case ErrorCode::HandshakeMismatch: return "HandshakeMismatch";
    case ErrorCode::PeerDisconnected: return "PeerDisconnected";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace mhng
