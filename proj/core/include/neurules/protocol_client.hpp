#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "neurules/oracle.hpp"
#include "neurules/protocol.hpp"

namespace neurules {

struct ClientOptions {
  /// Per-request deadline; zero fails every request with Timeout at once.
  std::chrono::milliseconds timeout{30000};
  /// Observes every line on the wire: '>' for sent, '<' for received.
  std::function<void(char direction, const std::string& line)> transcript;
};

/// Oracle backed by a wire-protocol peer. Safe for concurrent callers:
/// requests carry distinct ids and responses may arrive in any order.
class ProtocolClient final : public Oracle {
 public:
  /// Endpoint is "tcp:HOST:PORT" or a shell command whose stdin/stdout speak
  /// the protocol. Performs the info handshake before returning.
  static std::unique_ptr<ProtocolClient> spawn(const std::string& endpoint, ClientOptions options = {});

  /// Takes ownership of a connected stream socket.
  static std::unique_ptr<ProtocolClient> from_socket(int fd, ClientOptions options = {});

  ~ProtocolClient() override;
  ProtocolClient(const ProtocolClient&) = delete;
  ProtocolClient& operator=(const ProtocolClient&) = delete;

  OracleInfo info() const override;
  OracleOutput query(const OracleInput& input, std::size_t layer, std::span<const std::size_t> mask) override;

  /// Tokenization owned by the peer.
  std::vector<std::string> encode(const std::string& text);

  /// Sends one request (its id is assigned here) and waits for the matching
  /// response. Error responses are returned, not thrown.
  OracleResponse call(OracleRequest request);

 private:
  struct Impl;
  explicit ProtocolClient(std::unique_ptr<Impl> impl);
  void handshake();

  std::unique_ptr<Impl> impl_;
  OracleInfo info_;
};

}  // namespace neurules
