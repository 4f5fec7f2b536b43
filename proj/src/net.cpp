#include "mmsense/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <thread>

namespace mmsense::net {

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw Error(what + ": " + std::strerror(errno));
}

bool wait_for(int fd, short events, std::chrono::milliseconds timeout) {
  pollfd p{fd, events, 0};
  while (true) {
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw_errno("poll");
    return rc > 0;
  }
}

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const std::string port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  if (int rc = ::getaddrinfo(host, port.c_str(), &hints, &result); rc != 0) {
    throw Error("cannot resolve " + ep.str() + ": " + ::gai_strerror(rc));
  }
  return result;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw Error("endpoint must look like host:port, got '" + std::string(text) + "'");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value > 65535) {
    throw Error("invalid port in endpoint '" + std::string(text) + "'");
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TcpStream TcpStream::connect(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string last_error = "timed out";
  while (true) {
    addrinfo* info = resolve(endpoint, false);
    for (addrinfo* ai = info; ai != nullptr; ai = ai->ai_next) {
      Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!s) continue;
      if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
        ::freeaddrinfo(info);
        int one = 1;
        ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return TcpStream(std::move(s));
      }
      last_error = std::strerror(errno);
    }
    ::freeaddrinfo(info);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Error("cannot connect to " + endpoint.str() + ": " + last_error);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

bool TcpStream::send_all(std::span<const std::uint8_t> bytes, std::stop_token stop) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    if (stop.stop_requested()) return false;
    if (!wait_for(socket_.fd(), POLLOUT, std::chrono::milliseconds(20))) continue;
    const ssize_t n = ::send(socket_.fd(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL | MSG_DONTWAIT);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
      if (errno == EPIPE || errno == ECONNRESET) return false;
      throw_errno("send");
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::size_t> TcpStream::recv_for(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) {
  if (!wait_for(socket_.fd(), POLLIN, timeout)) return std::nullopt;
  while (true) {
    const ssize_t n = ::recv(socket_.fd(), buffer.data(), buffer.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) return std::nullopt;
    if (errno == ECONNRESET) return 0;
    throw_errno("recv");
  }
}

void TcpStream::set_send_buffer(int bytes) {
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_SNDBUF, &bytes, sizeof bytes);
}

void TcpStream::set_recv_buffer(int bytes) {
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_RCVBUF, &bytes, sizeof bytes);
}

void TcpStream::shutdown() {
  if (socket_) ::shutdown(socket_.fd(), SHUT_RDWR);
}

TcpListener TcpListener::bind(const Endpoint& endpoint) {
  addrinfo* info = resolve(endpoint, true);
  TcpListener listener;
  for (addrinfo* ai = info; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s) continue;
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), 4) == 0) {
      listener.socket_ = std::move(s);
      break;
    }
  }
  ::freeaddrinfo(info);
  if (!listener.socket_) throw_errno("cannot bind " + endpoint.str());
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listener.socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  listener.port_ = ntohs(addr.sin_port);
  return listener;
}

std::optional<TcpStream> TcpListener::accept_for(std::chrono::milliseconds timeout) {
  if (!wait_for(socket_.fd(), POLLIN, timeout)) return std::nullopt;
  Socket s(::accept(socket_.fd(), nullptr, nullptr));
  if (!s) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
    throw_errno("accept");
  }
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return TcpStream(std::move(s));
}

}  // namespace mmsense::net
