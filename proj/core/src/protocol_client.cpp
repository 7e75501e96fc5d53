#include "neurules/protocol_client.hpp"

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "neurules/error.hpp"

namespace neurules {

struct ProtocolClient::Impl {
  int fd = -1;
  pid_t child = -1;
  ClientOptions options;

  std::mutex mutex;  // guards everything below
  std::map<std::uint64_t, std::promise<OracleResponse>> pending;
  std::set<std::uint64_t> abandoned;  // timed out; late responses are dropped
  std::uint64_t next_id = 1;
  std::optional<Error> broken;

  std::mutex write_mutex;
  std::mutex transcript_mutex;
  std::thread reader;

  void record(char direction, const std::string& line) {
    if (!options.transcript) return;
    std::lock_guard lock(transcript_mutex);
    options.transcript(direction, line);
  }

  // Marks the connection unusable and fails every waiting caller.
  void fail_all(const Error& err) {
    std::lock_guard lock(mutex);
    if (!broken) broken = err;
    for (auto& [id, p] : pending) p.set_exception(std::make_exception_ptr(*broken));
    pending.clear();
  }

  void deliver(const std::string& line) {
    record('<', line);
    OracleResponse resp = decode_response(line);
    std::lock_guard lock(mutex);
    auto it = pending.find(resp.id);
    if (it == pending.end()) {
      if (abandoned.erase(resp.id) > 0) return;
      throw Error(ErrorCode::ProtocolViolation, "response for unknown id " + std::to_string(resp.id) + ": " + line);
    }
    it->second.set_value(std::move(resp));
    pending.erase(it);
  }

  void read_loop() {
    std::string buffer;
    char chunk[65536];
    for (;;) {
      const ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
      if (got == 0) {
        fail_all(Error(ErrorCode::PeerClosed, "peer closed the connection"));
        return;
      }
      if (got < 0) {
        if (errno == EINTR) continue;
        fail_all(Error(ErrorCode::PeerClosed, std::string("read failed: ") + std::strerror(errno)));
        return;
      }
      buffer.append(chunk, static_cast<std::size_t>(got));
      std::size_t start = 0;
      for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
        try {
          deliver(buffer.substr(start, nl - start));
        } catch (const Error& e) {
          fail_all(e);
          return;
        }
      }
      buffer.erase(0, start);
    }
  }

  void send_line(const std::string& line) {
    record('>', line);
    const std::string framed = line + "\n";
    std::lock_guard lock(write_mutex);
    std::size_t off = 0;
    while (off < framed.size()) {
      const ssize_t n = ::send(fd, framed.data() + off, framed.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::Transport, std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  ~Impl() {
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    if (reader.joinable()) reader.join();
    if (fd >= 0) ::close(fd);
    if (child > 0) {
      ::kill(child, SIGTERM);
      ::waitpid(child, nullptr, 0);
    }
  }
};

namespace {

int connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::Transport, "resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  int last_errno = 0;
  for (addrinfo* a = res; a != nullptr && fd < 0; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) != 0) {
      last_errno = errno;
      ::close(fd);
      fd = -1;
    }
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorCode::Transport, "connect " + host + ":" + port + ": " + std::strerror(last_errno));
  return fd;
}

// Child process whose stdin and stdout are one end of a socket pair.
std::pair<int, pid_t> spawn_process(const std::string& command) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw Error(ErrorCode::Transport, std::string("socketpair: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw Error(ErrorCode::Transport, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  return {sv[0], pid};
}

}  // namespace

ProtocolClient::ProtocolClient(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {
  Impl* im = impl_.get();
  im->reader = std::thread([im] { im->read_loop(); });
}

ProtocolClient::~ProtocolClient() = default;

std::unique_ptr<ProtocolClient> ProtocolClient::from_socket(int fd, ClientOptions options) {
  auto impl = std::make_unique<Impl>();
  impl->fd = fd;
  impl->options = std::move(options);
  std::unique_ptr<ProtocolClient> client(new ProtocolClient(std::move(impl)));
  client->handshake();
  return client;
}

std::unique_ptr<ProtocolClient> ProtocolClient::spawn(const std::string& endpoint, ClientOptions options) {
  auto impl = std::make_unique<Impl>();
  impl->options = std::move(options);
  if (endpoint.starts_with("tcp:")) {
    const std::string rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
      throw Error(ErrorCode::InvalidArgument, "TCP endpoint must look like tcp:HOST:PORT, got '" + endpoint + "'");
    }
    impl->fd = connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
  } else {
    if (endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "empty oracle endpoint");
    std::tie(impl->fd, impl->child) = spawn_process(endpoint);
  }
  std::unique_ptr<ProtocolClient> client(new ProtocolClient(std::move(impl)));
  client->handshake();
  return client;
}

void ProtocolClient::handshake() {
  OracleRequest req;
  req.op = "info";
  OracleResponse resp;
  try {
    resp = call(std::move(req));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Timeout) throw;
    throw Error(ErrorCode::HandshakeFailed, e.what());
  }
  if (resp.error) throw Error(ErrorCode::HandshakeFailed, "peer answered info with error: " + *resp.error);
  if (!resp.info) throw Error(ErrorCode::HandshakeFailed, "peer answered info without an info payload");
  info_ = *resp.info;
}

OracleResponse ProtocolClient::call(OracleRequest request) {
  auto& im = *impl_;
  std::future<OracleResponse> future;
  {
    std::lock_guard lock(im.mutex);
    if (im.broken) throw *im.broken;
    request.id = im.next_id++;
    future = im.pending[request.id].get_future();
  }
  const std::uint64_t id = request.id;
  auto abandon = [&] {
    std::lock_guard lock(im.mutex);
    if (im.pending.erase(id) > 0) im.abandoned.insert(id);
  };
  try {
    im.send_line(encode_request(request));
  } catch (...) {
    abandon();
    throw;
  }
  if (im.options.timeout.count() <= 0 || future.wait_for(im.options.timeout) != std::future_status::ready) {
    abandon();
    throw Error(ErrorCode::Timeout, "no response to request " + std::to_string(id) + " within " +
                                        std::to_string(im.options.timeout.count()) + " ms");
  }
  return future.get();
}

OracleInfo ProtocolClient::info() const { return info_; }

OracleOutput ProtocolClient::query(const OracleInput& input, std::size_t layer, std::span<const std::size_t> mask) {
  OracleRequest req;
  req.op = "activations";
  req.layer = layer;
  if (const auto* tokens = std::get_if<std::vector<std::string>>(&input)) {
    req.tokens = *tokens;
  } else {
    req.features = std::get<std::vector<double>>(input);
  }
  req.mask.assign(mask.begin(), mask.end());
  auto resp = call(std::move(req));
  if (resp.error) throw Error(ErrorCode::OracleFailure, "peer error: " + *resp.error);
  if (!resp.activations) throw Error(ErrorCode::ProtocolViolation, "activations response without activations");
  if (layer < info_.hidden_sizes.size() && resp.activations->size() != info_.hidden_sizes[layer]) {
    throw Error(ErrorCode::ProtocolViolation, "expected " + std::to_string(info_.hidden_sizes[layer]) +
                                                  " activations, got " + std::to_string(resp.activations->size()));
  }
  return {std::move(*resp.activations), *resp.prediction};
}

std::vector<std::string> ProtocolClient::encode(const std::string& text) {
  OracleRequest req;
  req.op = "encode";
  req.text = text;
  auto resp = call(std::move(req));
  if (resp.error) throw Error(ErrorCode::OracleFailure, "peer error: " + *resp.error);
  if (!resp.tokens) throw Error(ErrorCode::ProtocolViolation, "encode response without tokens");
  return std::move(*resp.tokens);
}

}  // namespace neurules
