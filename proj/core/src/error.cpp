#include "neurules/error.hpp"

namespace neurules {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::MissingLabelColumn: return "MissingLabelColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::LayerOutOfRange: return "LayerOutOfRange";
    case ErrorCode::OneClassOnly: return "OneClassOnly";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::LayerMismatch: return "LayerMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::FeatureOutOfRange: return "FeatureOutOfRange";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::TrivialTarget: return "TrivialTarget";
    case ErrorCode::IndexOutsideSentence: return "IndexOutsideSentence";
    case ErrorCode::PredicateNotActive: return "PredicateNotActive";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::OracleFailure: return "OracleFailure";
    case ErrorCode::MaskUnsupported: return "MaskUnsupported";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::HandshakeFailed: return "HandshakeFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::PeerClosed: return "PeerClosed";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace neurules
