#include <gtest/gtest.h>

#include <arpa/inet.h>

#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <mutex>

#include "neurules/protocol.hpp"
#include "neurules/protocol_client.hpp"
#include "neurules/rng.hpp"
#include "peer.hpp"
#include "support.hpp"

namespace neurules {
namespace {

using testing::SocketPeer;
using testing::write_line;

std::string random_text(Pcg32& rng) {
  static const std::vector<std::string> pieces{"a", "Z", " ", "\"", "\\", "\n", "\t", "é", "[MASK]", "#", "{", "}", ","};
  std::string s;
  const auto n = rng.bounded(8);
  for (std::uint32_t i = 0; i < n; ++i) s += pieces[rng.bounded(static_cast<std::uint32_t>(pieces.size()))];
  return s;
}

std::vector<std::string> random_tokens(Pcg32& rng) {
  std::vector<std::string> t(1 + rng.bounded(6));
  for (auto& s : t) s = random_text(rng);
  return t;
}

double random_double(Pcg32& rng) {
  switch (rng.bounded(4)) {
    case 0: return rng.uniform(-1, 1);
    case 1: return std::ldexp(rng.uniform(-1, 1), static_cast<int>(rng.bounded(200)) - 100);
    case 2: return static_cast<double>(rng.bounded(100));
    default: return rng.bounded(2) ? std::numeric_limits<double>::max() : std::numeric_limits<double>::denorm_min();
  }
}

OracleRequest random_request(Pcg32& rng) {
  OracleRequest r;
  r.id = rng.next_u32() * 7919ull;
  switch (rng.bounded(3)) {
    case 0: r.op = "info"; break;
    case 1:
      r.op = "encode";
      r.text = random_text(rng);
      break;
    default:
      r.op = "activations";
      r.layer = rng.bounded(12);
      if (rng.bounded(2)) {
        r.tokens = random_tokens(rng);
        for (std::size_t i = 0; i < r.tokens->size(); ++i) {
          if (rng.bounded(3) == 0) r.mask.push_back(i);
        }
      } else {
        r.features.emplace(1 + rng.bounded(5));
        for (auto& v : *r.features) v = random_double(rng);
      }
  }
  return r;
}

OracleResponse random_response(Pcg32& rng) {
  OracleResponse r;
  r.id = rng.next_u32();
  switch (rng.bounded(4)) {
    case 0: {
      OracleInfo info;
      info.num_layers = 1 + rng.bounded(4);
      for (std::size_t l = 0; l < info.num_layers; ++l) info.hidden_sizes.push_back(1 + rng.bounded(1000));
      info.num_classes = 2 + rng.bounded(5);
      info.modality = rng.bounded(2) ? Modality::Text : Modality::Vector;
      if (info.modality == Modality::Text) info.mask_token = "[MASK]";
      r.info = info;
      break;
    }
    case 1:
      r.activations.emplace(1 + rng.bounded(6));
      for (auto& v : *r.activations) v = random_double(rng);
      r.prediction = rng.bounded(5);
      break;
    case 2: r.tokens = random_tokens(rng); break;
    default: r.error = random_text(rng);
  }
  return r;
}

TEST(Protocol, RequestRoundTripFuzz) {
  Pcg32 rng(31, 7);
  for (int i = 0; i < 2000; ++i) {
    const auto req = random_request(rng);
    const auto line = encode_request(req);
    ASSERT_EQ(line.find('\n'), std::string::npos) << line;
    const auto back = decode_request(line);
    ASSERT_EQ(back, req) << line;
    ASSERT_EQ(encode_request(back), line);
  }
}

TEST(Protocol, ResponseRoundTripFuzz) {
  Pcg32 rng(32, 7);
  for (int i = 0; i < 2000; ++i) {
    const auto resp = random_response(rng);
    const auto line = encode_response(resp);
    ASSERT_EQ(line.find('\n'), std::string::npos) << line;
    const auto back = decode_response(line);
    ASSERT_EQ(back, resp) << line;
    ASSERT_EQ(encode_response(back), line);
  }
}

TEST(Protocol, ExactBytes) {
  OracleRequest r;
  r.id = 3;
  r.op = "activations";
  r.layer = 5;
  r.tokens = std::vector<std::string>{"so", "sad"};
  r.mask = {1};
  EXPECT_EQ(encode_request(r), R"({"id":3,"op":"activations","layer":5,"tokens":["so","sad"],"mask":[1]})");
  OracleResponse e;
  e.id = 4;
  e.error = "layer 9 out of range";
  EXPECT_EQ(encode_response(e), R"({"id":4,"error":"layer 9 out of range"})");
}

TEST(Protocol, StrictRequestDecoder) {
  for (const std::string bad : {
           "not json",
           "[1]",
           R"({"op":"info"})",
           R"({"id":-1,"op":"info"})",
           R"({"id":"1","op":"info"})",
           R"({"id":1,"op":"shutdown"})",
           R"({"id":1,"op":"info","extra":true})",
           R"({"id":1,"op":"activations","tokens":["a"]})",
           R"({"id":1,"op":"activations","layer":0})",
           R"({"id":1,"op":"activations","layer":0,"tokens":["a"],"features":[1]})",
           R"({"id":1,"op":"activations","layer":0,"features":[1],"mask":[0]})",
           R"({"id":1,"op":"activations","layer":-2,"features":[1]})",
           R"({"id":1,"op":"activations","layer":0,"tokens":["a"],"mask":[-1]})",
           R"({"id":1,"op":"encode"})",
           R"({"id":1,"op":"encode","text":5})",
           "{\"id\":1,\n\"op\":\"info\"}",
       }) {
    SCOPED_TRACE(bad);
    EXPECT_ERROR(decode_request(bad), ErrorCode::ProtocolViolation);
  }
}

TEST(Protocol, StrictResponseDecoder) {
  for (const std::string bad : {
           "",
           R"({"id":1})",
           R"({"id":1,"activations":[1.0]})",
           R"({"id":1,"prediction":0})",
           R"({"id":1,"activations":[1.0],"prediction":-1})",
           R"({"id":1,"error":"x","tokens":[]})",
           R"({"id":1,"error":"x","what":1})",
           R"({"id":1,"activations":["a"],"prediction":0})",
           R"({"id":1,"info":{"num_layers":1,"hidden_sizes":[2],"num_classes":2,"mask_token":null,"modality":"audio"}})",
           R"({"id":1,"info":{"num_layers":2,"hidden_sizes":[2],"num_classes":2,"mask_token":null,"modality":"vector"}})",
           R"({"id":1,"info":{"num_layers":1,"hidden_sizes":[2],"num_classes":2,"mask_token":null,"modality":"text"}})",
       }) {
    SCOPED_TRACE(bad);
    EXPECT_ERROR(decode_response(bad), ErrorCode::ProtocolViolation);
  }
}

TEST(Protocol, NonFiniteNumbersAreRejected) {
  OracleRequest r;
  r.op = "activations";
  r.layer = 0;
  r.features = std::vector<double>{std::nan("")};
  EXPECT_ERROR(encode_request(r), ErrorCode::ProtocolViolation);
  OracleResponse a;
  a.activations = std::vector<double>{std::numeric_limits<double>::infinity()};
  a.prediction = 0;
  EXPECT_ERROR(encode_response(a), ErrorCode::ProtocolViolation);
  r.op = "wat";
  r.features.reset();
  EXPECT_ERROR(encode_request(r), ErrorCode::ProtocolViolation);
}

TEST(ProtocolClient, GoldenTranscript) {
  const auto run = testing::run_golden(NEURULES_GOLDEN_SERVER, NEURULES_TEST_DATA "/protocol_golden.txt");
  EXPECT_EQ(run.wire, run.expected);
  EXPECT_EQ(run.tokens, (std::vector<std::string>{"so", "sad", "today"}));
  EXPECT_EQ(run.plain.activations, (std::vector<double>{0.25, -1.5}));
  EXPECT_EQ(run.plain.prediction, 1u);
  EXPECT_EQ(run.masked.activations, (std::vector<double>{0.0, 0.5, 2.0}));
  EXPECT_EQ(run.error_reply.error, "layer 7 out of range");
  // every recorded line re-encodes to the same bytes
  for (const auto& w : run.wire) {
    const auto body = w.substr(2);
    if (w[0] == '>') {
      EXPECT_EQ(encode_request(decode_request(body)), body);
    } else {
      EXPECT_EQ(encode_response(decode_response(body)), body);
    }
  }
}

TEST(ProtocolClient, GoldenServerRejectsDeviation) {
  // A script expecting different bytes makes the server quit, which the
  // client sees as a failed handshake.
  const auto script = testing::temp_path("golden_mismatch.txt");
  std::ofstream(script) << "> {\"id\":1,\"op\":\"encode\",\"text\":\"x\"}\n";
  EXPECT_ERROR(ProtocolClient::spawn(std::string(NEURULES_GOLDEN_SERVER) + " " + script.string()), ErrorCode::HandshakeFailed);
}

TEST(ProtocolClient, MalformedLineFailsEveryCaller) {
  for (const std::string garbage : {"{{{", R"({"id":2})", R"({"id":999,"error":"x"})", "[]"}) {
    SocketPeer peer(testing::garbage_after_handshake(garbage));
    auto client = ProtocolClient::from_socket(peer.client_fd());
    EXPECT_ERROR(client->query(std::vector<double>{1.0}, 0, {}), ErrorCode::ProtocolViolation);
    // the connection stays broken
    EXPECT_ERROR(client->query(std::vector<double>{1.0}, 0, {}), ErrorCode::ProtocolViolation);
  }
}

TEST(ProtocolClient, ZeroTimeout) {
  SocketPeer peer(testing::garbage_after_handshake("{}"));
  ClientOptions opts;
  opts.timeout = std::chrono::milliseconds(0);
  EXPECT_ERROR(ProtocolClient::from_socket(peer.client_fd(), opts), ErrorCode::Timeout);
}

TEST(ProtocolClient, LateResponseIsDropped) {
  // The first activations request is answered only after the second arrives.
  std::vector<OracleRequest> held;
  SocketPeer peer([&held](const std::string& line, int fd) {
    const auto req = decode_request(line);
    if (req.op == "info") {
      write_line(fd, encode_response(testing::info_reply(req.id, testing::vector_info())));
      return true;
    }
    held.push_back(req);
    if (held.size() == 2) {
      for (const auto& r : held) {
        OracleResponse resp;
        resp.id = r.id;
        resp.activations = std::vector<double>{r.features->at(0)};
        resp.prediction = 0;
        write_line(fd, encode_response(resp));
      }
    }
    return true;
  });
  ClientOptions opts;
  opts.timeout = std::chrono::milliseconds(150);
  auto client = ProtocolClient::from_socket(peer.client_fd(), opts);
  EXPECT_ERROR(client->query(std::vector<double>{1.0}, 0, {}), ErrorCode::Timeout);
  const auto out = client->query(std::vector<double>{2.0}, 0, {});
  EXPECT_EQ(out.activations, std::vector<double>{2.0});
}

TEST(ProtocolClient, PeerClosed) {
  SocketPeer peer([](const std::string& line, int fd) {
    const auto req = decode_request(line);
    if (req.op != "info") return false;
    write_line(fd, encode_response(testing::info_reply(req.id, testing::vector_info())));
    return true;
  });
  auto client = ProtocolClient::from_socket(peer.client_fd());
  EXPECT_ERROR(client->query(std::vector<double>{1.0}, 0, {}), ErrorCode::PeerClosed);
}

TEST(ProtocolClient, HandshakeFailures) {
  {
    SocketPeer peer([](const std::string&, int) { return false; });
    EXPECT_ERROR(ProtocolClient::from_socket(peer.client_fd()), ErrorCode::HandshakeFailed);
  }
  {
    SocketPeer peer([](const std::string& line, int fd) {
      OracleResponse r;
      r.id = decode_request(line).id;
      r.error = "not ready";
      write_line(fd, encode_response(r));
      return true;
    });
    EXPECT_ERROR(ProtocolClient::from_socket(peer.client_fd()), ErrorCode::HandshakeFailed);
  }
  {
    SocketPeer peer([](const std::string& line, int fd) {
      OracleResponse r;
      r.id = decode_request(line).id;
      r.tokens = std::vector<std::string>{};
      write_line(fd, encode_response(r));
      return true;
    });
    EXPECT_ERROR(ProtocolClient::from_socket(peer.client_fd()), ErrorCode::HandshakeFailed);
  }
  EXPECT_ERROR(ProtocolClient::spawn("exit 0"), ErrorCode::HandshakeFailed);
  EXPECT_ERROR(ProtocolClient::spawn("tcp:nohost"), ErrorCode::InvalidArgument);
  EXPECT_ERROR(ProtocolClient::spawn(""), ErrorCode::InvalidArgument);
}

TEST(ProtocolClient, WrongActivationWidth) {
  SocketPeer peer([](const std::string& line, int fd) {
    const auto req = decode_request(line);
    if (req.op == "info") {
      write_line(fd, encode_response(testing::info_reply(req.id, testing::vector_info(3))));
    } else {
      OracleResponse r;
      r.id = req.id;
      r.activations = std::vector<double>{1.0};
      r.prediction = 0;
      write_line(fd, encode_response(r));
    }
    return true;
  });
  auto client = ProtocolClient::from_socket(peer.client_fd());
  EXPECT_ERROR(client->query(std::vector<double>{1.0}, 0, {}), ErrorCode::ProtocolViolation);
}

// TCP server that holds activations requests until `batch` have arrived and
// then answers them newest first, echoing the first feature.
class ReversingServer {
 public:
  explicit ReversingServer(std::size_t batch) : batch_(batch) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 1) != 0) {
      throw Error(ErrorCode::Transport, "bind");
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }
  ~ReversingServer() {
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (conn_fd_ >= 0) ::shutdown(conn_fd_, SHUT_RDWR);
    thread_.join();
    ::close(listen_fd_);
    if (conn_fd_ >= 0) ::close(conn_fd_);
  }

  std::string endpoint() const { return "tcp:127.0.0.1:" + std::to_string(port_); }
  std::vector<std::uint64_t> answer_order() const { return order_; }

 private:
  void serve() {
    conn_fd_ = ::accept(listen_fd_, nullptr, nullptr);
    if (conn_fd_ < 0) return;
    std::vector<OracleRequest> held;
    testing::read_lines(conn_fd_, [&](const std::string& line) {
      const auto req = decode_request(line);
      if (req.op == "info") {
        write_line(conn_fd_, encode_response(testing::info_reply(req.id, testing::vector_info())));
        return true;
      }
      held.push_back(req);
      if (held.size() == batch_) {
        for (auto it = held.rbegin(); it != held.rend(); ++it) {
          OracleResponse r;
          r.id = it->id;
          r.activations = std::vector<double>{it->features->at(0)};
          r.prediction = 1;
          order_.push_back(r.id);
          write_line(conn_fd_, encode_response(r));
        }
        held.clear();
      }
      return true;
    });
  }

  std::size_t batch_;
  int listen_fd_ = -1;
  int conn_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread thread_;
  std::vector<std::uint64_t> order_;
};

TEST(ProtocolClient, ConcurrentCallersOverTcp) {
  constexpr std::size_t kCallers = 8;
  ReversingServer server(kCallers);
  std::mutex m;
  std::vector<std::string> sent;
  ClientOptions opts;
  opts.timeout = std::chrono::milliseconds(10000);
  opts.transcript = [&](char dir, const std::string& line) {
    std::lock_guard lock(m);
    if (dir == '>') sent.push_back(line);
  };
  auto client = ProtocolClient::spawn(server.endpoint(), opts);
  EXPECT_EQ(client->info(), testing::vector_info());
  std::vector<std::future<OracleOutput>> results;
  for (std::size_t c = 0; c < kCallers; ++c) {
    results.push_back(std::async(std::launch::async, [&client, c] {
      return client->query(std::vector<double>{static_cast<double>(c) + 0.5}, 0, {});
    }));
  }
  for (std::size_t c = 0; c < kCallers; ++c) {
    const auto out = results[c].get();
    EXPECT_EQ(out.activations, std::vector<double>{static_cast<double>(c) + 0.5});
    EXPECT_EQ(out.prediction, 1u);
  }
  // ids were unique and the answers did arrive out of order
  std::set<std::uint64_t> ids;
  for (const auto& s : sent) ids.insert(decode_request(s).id);
  EXPECT_EQ(ids.size(), kCallers + 1);
  client.reset();
  const auto order = server.answer_order();
  EXPECT_TRUE(std::is_sorted(order.rbegin(), order.rend()));
  EXPECT_EQ(order.size(), kCallers);
}

TEST(ProtocolClient, TcpConnectFailure) {
  // bind a port and close it so nothing listens there
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  EXPECT_ERROR(ProtocolClient::spawn("tcp:127.0.0.1:" + std::to_string(ntohs(addr.sin_port))), ErrorCode::Transport);
}

TEST(ProtocolClient, ServesLexicalGrounding) {
  // A remote oracle gives the same grounding as the local one it proxies.
  auto local = FixtureOracle::keyword_presence({"sad"}, 2);
  SocketPeer peer([&local](const std::string& line, int fd) {
    const auto req = decode_request(line);
    OracleResponse r;
    r.id = req.id;
    if (req.op == "info") {
      r.info = local.info();
    } else {
      auto out = local.query(*req.tokens, *req.layer, req.mask);
      r.activations = out.activations;
      r.prediction = out.prediction;
    }
    write_line(fd, encode_response(r));
    return true;
  });
  auto remote = ProtocolClient::from_socket(peer.client_fd());
  EXPECT_EQ(remote->info(), local.info());
  const std::vector<std::string> tokens{"so", "sad"};
  const std::vector<std::size_t> mask{1};
  EXPECT_EQ(query_activations(*remote, tokens, 0, mask), local.query(tokens, 0, mask));
  EXPECT_ERROR(query_activations(*remote, tokens, 0, std::vector<std::size_t>{5}), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace neurules
