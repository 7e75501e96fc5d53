#pragma once

// Oracle wire protocol v1: one compact JSON object per '\n'-terminated line.
//
//   {"id":1,"op":"info"}
//   {"id":1,"info":{"num_layers":6,"hidden_sizes":[768,...],"num_classes":4,
//                   "mask_token":"[MASK]","modality":"text"}}
//   {"id":2,"op":"encode","text":"so sad today"}
//   {"id":2,"tokens":["so","sad","today"]}
//   {"id":3,"op":"activations","layer":5,"tokens":["so","sad","today"],"mask":[1]}
//   {"id":3,"activations":[0.25,...],"prediction":3}
//   {"id":4,"error":"layer 9 out of range"}
//
// Vector oracles take "features" in place of "tokens" and never a mask.
// "info" must be the first request on a connection.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neurules/oracle.hpp"

namespace neurules {

struct OracleRequest {
  std::uint64_t id = 0;
  std::string op;  // "info", "encode" or "activations"
  std::optional<std::size_t> layer;
  std::optional<std::vector<std::string>> tokens;
  std::optional<std::vector<double>> features;
  std::optional<std::string> text;
  std::vector<std::size_t> mask;

  bool operator==(const OracleRequest&) const = default;
};

struct OracleResponse {
  std::uint64_t id = 0;
  std::optional<OracleInfo> info;
  std::optional<std::vector<double>> activations;
  std::optional<std::uint32_t> prediction;
  std::optional<std::vector<std::string>> tokens;
  std::optional<std::string> error;

  bool operator==(const OracleResponse&) const = default;
};

/// Single line without the trailing newline. Key order is fixed, so equal
/// messages always encode to identical bytes.
std::string encode_request(const OracleRequest& req);
std::string encode_response(const OracleResponse& resp);

/// Strict decoders; anything that is not a well-formed v1 message raises
/// ProtocolViolation quoting the line.
OracleRequest decode_request(const std::string& line);
OracleResponse decode_response(const std::string& line);

std::string_view to_string(Modality m);

}  // namespace neurules
