#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <string_view>
#include <utility>

#include "mmsense/error.hpp"

namespace mmsense::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port"; the host may be empty (meaning all interfaces when binding).
  static Endpoint parse(std::string_view text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void close();

 private:
  int fd_ = -1;
};

class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(Socket socket) : socket_(std::move(socket)) {}

  /// Retries until `timeout` elapses; throws Error if never connected.
  static TcpStream connect(const Endpoint& endpoint, std::chrono::milliseconds timeout);

  /// Writes everything unless the peer goes away (returns false) or a stop
  /// is requested (returns false).
  bool send_all(std::span<const std::uint8_t> bytes, std::stop_token stop = {});
  /// Bytes read, 0 on orderly close, nullopt if nothing arrived within
  /// `timeout`. Throws on socket errors other than a reset peer (treated as
  /// close).
  std::optional<std::size_t> recv_for(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout);

  void set_send_buffer(int bytes);
  void set_recv_buffer(int bytes);
  void shutdown();
  bool is_open() const { return static_cast<bool>(socket_); }

 private:
  Socket socket_;
};

class TcpListener {
 public:
  static TcpListener bind(const Endpoint& endpoint);
  std::uint16_t port() const { return port_; }
  /// nullopt on timeout.
  std::optional<TcpStream> accept_for(std::chrono::milliseconds timeout);

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

}  // namespace mmsense::net
