#include "neurules/protocol.hpp"

#include <cmath>

#include "json.hpp"
#include "neurules/error.hpp"

namespace neurules {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void violation(const std::string& line, const std::string& what) {
  throw Error(ErrorCode::ProtocolViolation, what + ": " + line);
}

void check_ops(const std::string& op) {
  if (op != "info" && op != "encode" && op != "activations") throw Error(ErrorCode::ProtocolViolation, "unknown op '" + op + "'");
}

void check_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::ProtocolViolation, "non-finite number");
  }
}

// nlohmann converts -2 to a huge size_t without complaint.
std::size_t unsigned_at(const ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) throw Error(ErrorCode::ProtocolViolation, std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::vector<std::size_t> unsigned_list(const ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw Error(ErrorCode::ProtocolViolation, std::string("'") + key + "' must be an array");
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_unsigned()) throw Error(ErrorCode::ProtocolViolation, std::string("'") + key + "' entries must be non-negative integers");
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

ordered_json info_json(const OracleInfo& info) {
  ordered_json j;
  j["num_layers"] = info.num_layers;
  j["hidden_sizes"] = info.hidden_sizes;
  j["num_classes"] = info.num_classes;
  j["mask_token"] = info.mask_token ? ordered_json(*info.mask_token) : ordered_json(nullptr);
  j["modality"] = std::string(to_string(info.modality));
  return j;
}

OracleInfo info_from_json(const ordered_json& j) {
  OracleInfo info;
  info.num_layers = unsigned_at(j, "num_layers");
  info.hidden_sizes = unsigned_list(j, "hidden_sizes");
  info.num_classes = unsigned_at(j, "num_classes");
  if (j.contains("mask_token") && !j.at("mask_token").is_null()) info.mask_token = j.at("mask_token").get<std::string>();
  const auto modality = j.at("modality").get<std::string>();
  if (modality == "text") {
    info.modality = Modality::Text;
  } else if (modality == "vector") {
    info.modality = Modality::Vector;
  } else {
    throw Error(ErrorCode::ProtocolViolation, "unknown modality '" + modality + "'");
  }
  info.validate();
  return info;
}

ordered_json parse_object(const std::string& line) {
  if (line.find('\n') != std::string::npos) violation(line, "embedded newline");
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception&) {
    violation(line, "malformed JSON");
  }
  if (!j.is_object()) violation(line, "message is not an object");
  if (!j.contains("id") || !j.at("id").is_number_unsigned()) violation(line, "missing or invalid id");
  return j;
}

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::Text ? "text" : "vector"; }

std::string encode_request(const OracleRequest& req) {
  check_ops(req.op);
  ordered_json j;
  j["id"] = req.id;
  j["op"] = req.op;
  if (req.layer) j["layer"] = *req.layer;
  if (req.tokens) j["tokens"] = *req.tokens;
  if (req.features) {
    check_finite(*req.features);
    j["features"] = *req.features;
  }
  if (req.text) j["text"] = *req.text;
  if (!req.mask.empty()) j["mask"] = req.mask;
  return j.dump();
}

std::string encode_response(const OracleResponse& resp) {
  ordered_json j;
  j["id"] = resp.id;
  if (resp.info) j["info"] = info_json(*resp.info);
  if (resp.activations) {
    check_finite(*resp.activations);
    j["activations"] = *resp.activations;
  }
  if (resp.prediction) j["prediction"] = *resp.prediction;
  if (resp.tokens) j["tokens"] = *resp.tokens;
  if (resp.error) j["error"] = *resp.error;
  return j.dump();
}

OracleRequest decode_request(const std::string& line) {
  const auto j = parse_object(line);
  OracleRequest req;
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "id" && key != "op" && key != "layer" && key != "tokens" && key != "features" && key != "text" &&
          key != "mask") {
        violation(line, "unexpected key '" + key + "'");
      }
    }
    req.id = j.at("id").get<std::uint64_t>();
    req.op = j.at("op").get<std::string>();
    check_ops(req.op);
    if (j.contains("layer")) req.layer = unsigned_at(j, "layer");
    if (j.contains("tokens")) req.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("features")) req.features = j.at("features").get<std::vector<double>>();
    if (j.contains("text")) req.text = j.at("text").get<std::string>();
    if (j.contains("mask")) req.mask = unsigned_list(j, "mask");
  } catch (const nlohmann::json::exception& e) {
    violation(line, e.what());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ProtocolViolation) throw;
    violation(line, e.what());
  }
  if (req.op == "activations") {
    if (!req.layer) violation(line, "activations request without layer");
    if (req.tokens.has_value() == req.features.has_value()) violation(line, "exactly one of tokens/features required");
    if (req.features && !req.mask.empty()) violation(line, "mask on a feature request");
  }
  if (req.op == "encode" && !req.text) violation(line, "encode request without text");
  return req;
}

OracleResponse decode_response(const std::string& line) {
  const auto j = parse_object(line);
  OracleResponse resp;
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "id" && key != "info" && key != "activations" && key != "prediction" && key != "tokens" &&
          key != "error") {
        violation(line, "unexpected key '" + key + "'");
      }
    }
    resp.id = j.at("id").get<std::uint64_t>();
    if (j.contains("info")) resp.info = info_from_json(j.at("info"));
    if (j.contains("activations")) resp.activations = j.at("activations").get<std::vector<double>>();
    if (j.contains("prediction")) resp.prediction = static_cast<std::uint32_t>(unsigned_at(j, "prediction"));
    if (j.contains("tokens")) resp.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("error")) resp.error = j.at("error").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    violation(line, e.what());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ProtocolViolation && e.code() != ErrorCode::InvariantViolation) throw;
    violation(line, e.what());
  }
  if (resp.activations.has_value() != resp.prediction.has_value()) {
    violation(line, "activations and prediction must appear together");
  }
  const int payloads = resp.info.has_value() + resp.activations.has_value() + resp.tokens.has_value() +
                       resp.error.has_value();
  if (payloads != 1) violation(line, "exactly one payload expected");
  return resp;
}

}  // namespace neurules
