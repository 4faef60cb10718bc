#pragma once

// Length-prefixed request/response protocol for in-context embeddings.
//
// Every frame is a u32 little-endian payload length followed by the payload.
//   request  payload: "DLXQ" u16 version, u64 seq, u32 count, then per request
//                     u32 len + sentence bytes, u32 start, u32 end,
//                     u8 has_replacement, [u32 len + replacement bytes]
//   response payload: "DLXR" u16 version, u64 seq, u32 count, then per request
//                     u8 status (0 ok, 1 error), u16 len + error message;
//                     followed by a DLXB batch holding the successful records
//                     in request order (word = encoded span text,
//                     sentence_id = request index).
// Responses carry the sequence number of their request, so a client may keep
// several batches in flight and accept them in any order.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <sys/un.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dlx/binary_io.hpp"
#include "dlx/error.hpp"
#include "dlx/provider.hpp"
#include "dlx/text.hpp"

namespace dlx {

inline constexpr char kRequestMagic[4] = {'D', 'L', 'X', 'Q'};
inline constexpr char kResponseMagic[4] = {'D', 'L', 'X', 'R'};
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

/// "unix:/path/to/socket" or "tcp:host:port".
struct Endpoint {
  enum class Kind { kUnix, kTcp };
  Kind kind = Kind::kUnix;
  std::string path;
  std::string host;
  std::uint16_t port = 0;

  static Endpoint parse(std::string_view s) {
    Endpoint ep;
    if (s.starts_with("unix:")) {
      ep.kind = Kind::kUnix;
      ep.path = std::string(s.substr(5));
      if (ep.path.empty()) throw ConfigError("unix endpoint needs a socket path");
      if (ep.path.size() >= sizeof(sockaddr_un::sun_path)) throw ConfigError("unix socket path too long");
      return ep;
    }
    if (s.starts_with("tcp:")) {
      auto rest = s.substr(4);
      auto colon = rest.rfind(':');
      if (colon == std::string_view::npos) throw ConfigError("tcp endpoint must be tcp:host:port");
      auto port = text::parse_number<std::uint16_t>(rest.substr(colon + 1));
      if (!port || colon == 0) throw ConfigError("bad tcp endpoint: " + std::string(s));
      ep.kind = Kind::kTcp;
      ep.host = std::string(rest.substr(0, colon));
      ep.port = *port;
      return ep;
    }
    throw ConfigError("unknown endpoint scheme: " + std::string(s));
  }

  std::string str() const {
    return kind == Kind::kUnix ? "unix:" + path : "tcp:" + host + ":" + std::to_string(port);
  }
};

class FileDescriptor {
 public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileDescriptor& operator=(FileDescriptor&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~FileDescriptor() { reset(); }

  int get() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

namespace wire {

inline std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

inline void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw ProviderError("provider send timed out");
      throw ProviderError(errno_text("send"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Returns false on clean EOF before any byte was read.
inline bool recv_exact(int fd, char* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const auto r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw ProviderError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw ProviderError("provider timed out");
      throw ProviderError(errno_text("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline void send_frame(int fd, std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw ContractError("frame too large");
  io::Writer w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
  send_all(fd, w.buffer());
  send_all(fd, payload);
}

inline std::optional<std::string> recv_frame(int fd) {
  char len_bytes[4];
  if (!recv_exact(fd, len_bytes, 4)) return std::nullopt;
  io::Reader r(std::string_view(len_bytes, 4));
  const auto len = r.get<std::uint32_t>("frame length");
  if (len > kMaxFrameBytes) throw ProviderError("frame length " + std::to_string(len) + " exceeds limit");
  std::string payload(len, '\0');
  if (len > 0 && !recv_exact(fd, payload.data(), len)) throw ProviderError("connection closed mid-frame");
  return payload;
}

struct RequestBatch {
  std::uint64_t seq = 0;
  std::vector<InContextRequest> requests;
};

inline std::string encode_requests(std::uint64_t seq, std::span<const InContextRequest> requests) {
  io::Writer w;
  w.put_bytes(std::string_view(kRequestMagic, 4));
  w.put<std::uint16_t>(kProtocolVersion);
  w.put<std::uint64_t>(seq);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(requests.size()));
  for (const auto& q : requests) {
    w.put_string<std::uint32_t>(q.sentence);
    w.put<std::uint32_t>(q.target_span.start);
    w.put<std::uint32_t>(q.target_span.end);
    w.put<std::uint8_t>(q.replacement ? 1 : 0);
    if (q.replacement) w.put_string<std::uint32_t>(*q.replacement);
  }
  return std::move(w).take();
}

inline RequestBatch decode_requests(std::string_view payload) {
  io::Reader r(payload);
  if (r.get_bytes(4, "magic") != std::string_view(kRequestMagic, 4)) r.fail("bad request magic");
  if (r.get<std::uint16_t>("version") != kProtocolVersion) r.fail("unsupported protocol version");
  RequestBatch batch;
  batch.seq = r.get<std::uint64_t>("seq");
  const auto count = r.get<std::uint32_t>("request count");
  for (std::uint32_t i = 0; i < count; ++i) {
    InContextRequest q;
    q.sentence = r.get_string<std::uint32_t>("sentence");
    q.target_span.start = r.get<std::uint32_t>("span start");
    q.target_span.end = r.get<std::uint32_t>("span end");
    const auto has = r.get<std::uint8_t>("replacement flag");
    if (has > 1) r.fail("bad replacement flag");
    if (has) q.replacement = r.get_string<std::uint32_t>("replacement");
    batch.requests.push_back(std::move(q));
  }
  if (!r.at_end()) r.fail("trailing bytes in request frame");
  return batch;
}

inline std::string encode_response(std::uint64_t seq, const EmbeddingSpec& spec,
                                   std::span<const InContextRequest> requests,
                                   std::span<const InContextResult> results) {
  if (requests.size() != results.size()) throw ContractError("response/request count mismatch");
  io::Writer w;
  w.put_bytes(std::string_view(kResponseMagic, 4));
  w.put<std::uint16_t>(kProtocolVersion);
  w.put<std::uint64_t>(seq);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(results.size()));
  ExchangeBatch batch{spec, {}};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& res = results[i];
    w.put<std::uint8_t>(res.ok() ? 0 : 1);
    std::string msg = res.ok() ? std::string() : res.error.substr(0, 0xFFFF);
    w.put_string<std::uint16_t>(msg);
    if (res.ok()) {
      auto [sentence, span] = requests[i].resolved();
      std::string word = sentence.substr(span.start, span.length()).substr(0, 0xFFFF);
      auto values = res.embedding->values();
      batch.records.push_back({std::move(word), i, std::vector<float>(values.begin(), values.end())});
    }
  }
  encode_batch(w, batch);
  return std::move(w).take();
}

struct DecodedResponse {
  std::uint64_t seq = 0;
  std::vector<InContextResult> results;
};

inline DecodedResponse decode_response(std::string_view payload, const EmbeddingSpec& expected) {
  io::Reader r(payload);
  if (r.get_bytes(4, "magic") != std::string_view(kResponseMagic, 4)) r.fail("bad response magic");
  if (r.get<std::uint16_t>("version") != kProtocolVersion) r.fail("unsupported protocol version");
  DecodedResponse out;
  out.seq = r.get<std::uint64_t>("seq");
  const auto count = r.get<std::uint32_t>("result count");
  std::vector<std::uint8_t> status(count);
  out.results.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    status[i] = r.get<std::uint8_t>("status");
    if (status[i] > 1) r.fail("bad status byte");
    out.results[i].error = r.get_string<std::uint16_t>("error message");
  }
  auto batch = decode_batch(r);
  if (!r.at_end()) r.fail("trailing bytes in response frame");
  if (!(batch.spec == expected))
    throw ProviderError("provider embedding shape (dim " + std::to_string(batch.spec.dim) + ", " +
                        std::to_string(batch.spec.layer_set.size()) + " layers) does not match configuration");
  std::size_t next = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (status[i] != 0) {
      if (out.results[i].error.empty()) out.results[i].error = "extractor error";
      continue;
    }
    if (next >= batch.records.size() || batch.records[next].sentence_id != i)
      throw FormatError("response records out of step with status table", r.offset());
    out.results[i].embedding = LayeredEmbedding(expected, std::move(batch.records[next].values));
    ++next;
  }
  if (next != batch.records.size()) throw FormatError("response carries extra records", r.offset());
  return out;
}

inline FileDescriptor connect_endpoint(const Endpoint& ep, std::chrono::milliseconds timeout) {
  FileDescriptor fd;
  if (ep.kind == Endpoint::Kind::kUnix) {
    fd = FileDescriptor(::socket(AF_UNIX, SOCK_STREAM, 0));
    if (!fd.valid()) throw ProviderError(errno_text("socket"));
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, ep.path.c_str(), sizeof(addr.sun_path) - 1);
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw ProviderError(errno_text(("connect " + ep.str()).c_str()));
  } else {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      throw ProviderError("cannot resolve " + ep.str());
    for (auto* ai = res; ai; ai = ai->ai_next) {
      FileDescriptor candidate(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!candidate.valid()) continue;
      if (::connect(candidate.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
        fd = std::move(candidate);
        break;
      }
    }
    ::freeaddrinfo(res);
    if (!fd.valid()) throw ProviderError("cannot connect to " + ep.str());
  }
  if (timeout.count() > 0) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd.get(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd.get(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  }
  return fd;
}

}  // namespace wire

/// Client side of the socket protocol. Large request lists are split into
/// batches that are all sent before any response is read.
class SocketProvider : public Provider {
 public:
  SocketProvider(Endpoint endpoint, EmbeddingSpec spec, std::size_t chunk_size = 64,
                 std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : endpoint_(std::move(endpoint)), spec_(std::move(spec)), chunk_(std::max<std::size_t>(1, chunk_size)),
        timeout_(timeout) {
    spec_.validate();
  }

  const EmbeddingSpec& spec() const override { return spec_; }
  std::size_t batch_limit() const override { return static_cast<std::size_t>(-1) / 2; }

  std::vector<InContextResult> embed(std::span<const InContextRequest> requests) override {
    if (!conn_.valid()) conn_ = wire::connect_endpoint(endpoint_, timeout_);
    try {
      return exchange(requests);
    } catch (...) {
      conn_.reset();  // the stream position is unknown after a failure
      throw;
    }
  }

 private:
  std::vector<InContextResult> exchange(std::span<const InContextRequest> requests) {
    std::map<std::uint64_t, std::size_t> offsets;  // seq -> first request index
    for (std::size_t i = 0; i < requests.size(); i += chunk_) {
      const auto n = std::min(chunk_, requests.size() - i);
      const auto seq = next_seq_++;
      wire::send_frame(conn_.get(), wire::encode_requests(seq, requests.subspan(i, n)));
      offsets.emplace(seq, i);
    }
    std::vector<InContextResult> out(requests.size());
    std::size_t pending = offsets.size();
    while (pending > 0) {
      auto frame = wire::recv_frame(conn_.get());
      if (!frame) throw ProviderError("provider closed the connection");
      auto resp = wire::decode_response(*frame, spec_);
      auto it = offsets.find(resp.seq);
      if (it == offsets.end()) throw ProviderError("response for unknown batch " + std::to_string(resp.seq));
      const auto start = it->second;
      const auto expected = std::min(chunk_, requests.size() - start);
      if (resp.results.size() != expected) throw ProviderError("response size does not match its batch");
      for (std::size_t j = 0; j < expected; ++j) out[start + j] = std::move(resp.results[j]);
      offsets.erase(it);
      --pending;
    }
    return out;
  }

  Endpoint endpoint_;
  EmbeddingSpec spec_;
  std::size_t chunk_;
  std::chrono::milliseconds timeout_;
  FileDescriptor conn_;
  std::uint64_t next_seq_ = 1;
};

/// Serves any Provider over the socket protocol, one connection at a time.
/// A malformed frame closes that connection.
class ProviderServer {
 public:
  ProviderServer(Endpoint endpoint, Provider& provider) : endpoint_(std::move(endpoint)), provider_(provider) {
    listen_ = bind_and_listen();
  }

  ~ProviderServer() {
    if (endpoint_.kind == Endpoint::Kind::kUnix) ::unlink(endpoint_.path.c_str());
  }

  /// Port actually bound (useful with tcp:...:0).
  std::uint16_t bound_port() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    ::getsockname(listen_.get(), reinterpret_cast<sockaddr*>(&ss), &len);
    if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
    return 0;
  }

  /// Accept loop; returns once `stop` becomes true.
  void serve(const std::atomic<bool>& stop) {
    while (!stop.load()) {
      pollfd pfd{listen_.get(), POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready <= 0) continue;
      FileDescriptor conn(::accept(listen_.get(), nullptr, nullptr));
      if (!conn.valid()) continue;
      handle(conn, stop);
    }
  }

 private:
  void handle(FileDescriptor& conn, const std::atomic<bool>& stop) {
    while (!stop.load()) {
      pollfd pfd{conn.get(), POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready == 0) continue;
      if (ready < 0) return;
      try {
        auto frame = wire::recv_frame(conn.get());
        if (!frame) return;
        auto batch = wire::decode_requests(*frame);
        auto results = provider_.embed(batch.requests);
        wire::send_frame(conn.get(), wire::encode_response(batch.seq, provider_.spec(), batch.requests, results));
      } catch (const Error&) {
        return;
      }
    }
  }

  FileDescriptor bind_and_listen() {
    FileDescriptor fd;
    if (endpoint_.kind == Endpoint::Kind::kUnix) {
      ::unlink(endpoint_.path.c_str());
      fd = FileDescriptor(::socket(AF_UNIX, SOCK_STREAM, 0));
      sockaddr_un addr{};
      addr.sun_family = AF_UNIX;
      std::strncpy(addr.sun_path, endpoint_.path.c_str(), sizeof(addr.sun_path) - 1);
      if (!fd.valid() || ::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw ProviderError(wire::errno_text(("bind " + endpoint_.str()).c_str()));
    } else {
      fd = FileDescriptor(::socket(AF_INET, SOCK_STREAM, 0));
      int one = 1;
      ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = htons(endpoint_.port);
      if (::inet_pton(AF_INET, endpoint_.host == "localhost" ? "127.0.0.1" : endpoint_.host.c_str(),
                      &addr.sin_addr) != 1)
        throw ConfigError("server endpoint needs an IPv4 address: " + endpoint_.str());
      if (!fd.valid() || ::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw ProviderError(wire::errno_text(("bind " + endpoint_.str()).c_str()));
    }
    if (::listen(fd.get(), 8) != 0) throw ProviderError(wire::errno_text("listen"));
    return fd;
  }

  Endpoint endpoint_;
  Provider& provider_;
  FileDescriptor listen_;
};

}  // namespace dlx
