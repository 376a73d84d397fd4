#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "arcon/pairnet/codec.hpp"

namespace arcon::pairnet {

struct HostPort {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline HostPort parse_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::ConfigInvalid, "expected host:port, got '" + s + "'");
  HostPort hp;
  hp.host = s.substr(0, colon);
  try {
    hp.port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigInvalid, "bad port in '" + s + "'");
  }
  if (hp.port < 0 || hp.port > 65535) throw Error(ErrorKind::ConfigInvalid, "bad port in '" + s + "'");
  if (hp.host.empty()) hp.host = "127.0.0.1";
  return hp;
}

/// Owning file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in make_addr(const HostPort& hp) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(hp.port));
  const std::string host = hp.host == "localhost" ? "127.0.0.1" : hp.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorKind::ConfigInvalid, "unsupported host '" + hp.host + "' (IPv4 literal expected)");
  }
  return addr;
}

/// Blocking TCP stream. read_some/write_all are safe to call from one reader
/// and one writer thread concurrently; shutdown() wakes a blocked reader.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(Fd fd) : fd_(std::move(fd)) {
    int one = 1;
    ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  static TcpStream connect(const HostPort& hp) {
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd.valid()) throw Error(ErrorKind::TransportFailure, std::string("socket: ") + std::strerror(errno));
    const sockaddr_in addr = make_addr(hp);
    if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
      throw Error(ErrorKind::TransportFailure, "connect " + hp.str() + ": " + std::strerror(errno));
    }
    return TcpStream(std::move(fd));
  }

  bool valid() const { return fd_.valid(); }

  void write_all(std::string_view bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(fd_.get(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::TransportFailure, std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Returns 0 on orderly shutdown by either side.
  std::size_t read_some(char* buf, std::size_t cap) {
    for (;;) {
      const ssize_t n = ::recv(fd_.get(), buf, cap, 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      if (errno == ECONNRESET || errno == EBADF || errno == ENOTCONN) return 0;
      throw Error(ErrorKind::TransportFailure, std::string("recv: ") + std::strerror(errno));
    }
  }

  /// Waits up to timeout_ms for readability. Returns false on timeout.
  bool wait_readable(int timeout_ms) const {
    pollfd p{fd_.get(), POLLIN, 0};
    const int r = ::poll(&p, 1, timeout_ms);
    return r > 0;
  }

  void shutdown() {
    if (fd_.valid()) ::shutdown(fd_.get(), SHUT_RDWR);
  }

 private:
  Fd fd_;
};

class TcpListener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port.
  static TcpListener bind(const HostPort& hp) {
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd.valid()) throw Error(ErrorKind::PortUnavailable, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const sockaddr_in addr = make_addr(hp);
    if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd.get(), 64) != 0) {
      throw Error(ErrorKind::PortUnavailable, "cannot listen on " + hp.str() + ": " + std::strerror(errno));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&bound), &len);
    TcpListener l;
    l.fd_ = std::move(fd);
    l.port_ = ntohs(bound.sin_port);
    return l;
  }

  int port() const { return port_; }

  /// Waits up to timeout_ms for a connection.
  std::optional<TcpStream> accept(int timeout_ms) {
    pollfd p{fd_.get(), POLLIN, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) return std::nullopt;
    const int c = ::accept4(fd_.get(), nullptr, nullptr, SOCK_CLOEXEC);
    if (c < 0) return std::nullopt;
    return TcpStream(Fd(c));
  }

  void close() { fd_.reset(); }

 private:
  Fd fd_;
  int port_ = 0;
};

/// Envelope-level wrapper around a stream: serialized writes, buffered reads.
class FramedStream {
 public:
  FramedStream() = default;
  explicit FramedStream(TcpStream s) : stream_(std::move(s)) {}

  void send(const Envelope& e) {
    const std::string frame = encode(e);
    std::lock_guard lock(write_mutex_);
    stream_.write_all(frame);
  }

  /// Next envelope, or nullopt on EOF or timeout (timeout_ms < 0 blocks).
  /// Throws FrameTooLarge / MalformedPayload for a bad peer.
  std::optional<Envelope> receive(int timeout_ms = -1) {
    for (;;) {
      if (auto e = buffer_.next()) return e;
      if (timeout_ms >= 0 && !stream_.wait_readable(timeout_ms)) return std::nullopt;
      char buf[16384];
      const std::size_t n = stream_.read_some(buf, sizeof buf);
      if (n == 0) {
        eof_ = true;
        return std::nullopt;
      }
      buffer_.append(std::string_view(buf, n));
    }
  }

  bool eof() const { return eof_; }
  void shutdown() { stream_.shutdown(); }

 private:
  TcpStream stream_;
  FrameBuffer buffer_;
  std::mutex write_mutex_;
  bool eof_ = false;
};

}  // namespace arcon::pairnet
