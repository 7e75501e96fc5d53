#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neurules {

enum class ErrorCode {
  // generic
  InvalidArgument,
  Io,
  // activation store
  MalformedHeader,
  TruncatedPayload,
  BadMagic,
  UnsupportedVersion,
  NonFiniteValue,
  InvariantViolation,
  MissingLabelColumn,
  NonNumericCell,
  LabelOutOfRange,
  DegenerateSplit,
  // mlp
  ShapeMismatch,
  NonFiniteLoss,
  LayerOutOfRange,
  // predicates / rules
  OneClassOnly,
  KTooLarge,
  LayerMismatch,
  LengthMismatch,
  EmptyInput,
  FeatureOutOfRange,
  // grounding
  EmptyClass,
  TrivialTarget,
  IndexOutsideSentence,
  PredicateNotActive,
  EmptyCorpus,
  // oracle
  OracleFailure,
  MaskUnsupported,
  Transport,
  ProtocolViolation,
  HandshakeFailed,
  Timeout,
  PeerClosed,
  // parsing of our own documents
  ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every domain failure in the library is reported as an Error carrying a
/// machine-checkable code; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace neurules
