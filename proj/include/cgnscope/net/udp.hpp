// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal blocking-with-deadline IPv4 UDP socket for live runs.

#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"

namespace cgn::net {

inline double monotonic_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

inline sockaddr_in to_sockaddr(const Endpoint& ep) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(ep.port);
  sa.sin_addr.s_addr = htonl(ep.ip.value);
  return sa;
}

/// "host:port" where host is a dotted quad or a DNS name (first IPv4 answer).
inline Endpoint resolve(std::string_view host_port) {
  auto colon = host_port.rfind(':');
  if (colon == std::string_view::npos) throw ParseError("expected host:port, got '" + std::string(host_port) + "'");
  auto port = cgn::detail::parse_int<std::uint16_t>(host_port.substr(colon + 1), "port");
  auto host = std::string(host_port.substr(0, colon));
  if (auto ip = Ipv4::try_parse(host)) return {*ip, port};
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0)
    throw InputError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  auto ip = Ipv4{ntohl(reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr.s_addr)};
  ::freeaddrinfo(res);
  return {ip, port};
}

/// Local address the kernel would use to reach `dst`.
inline Ipv4 route_source(const Endpoint& dst) {
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw InputError(std::string("socket: ") + std::strerror(errno));
  auto sa = to_sockaddr(dst);
  sockaddr_in local{};
  socklen_t len = sizeof local;
  bool ok = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0 &&
            ::getsockname(fd, reinterpret_cast<sockaddr*>(&local), &len) == 0;
  ::close(fd);
  if (!ok) throw InputError("no route to " + dst.to_string());
  return Ipv4{ntohl(local.sin_addr.s_addr)};
}

/// One TCP request/response with a deadline; nullopt on any failure.
inline std::optional<std::string> tcp_exchange(const Endpoint& local, const Endpoint& dst, std::string_view request,
                                               double timeout) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return std::nullopt;
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto la = to_sockaddr(local);
  auto da = to_sockaddr(dst);
  timeval tv{static_cast<time_t>(timeout), static_cast<suseconds_t>((timeout - static_cast<long>(timeout)) * 1e6)};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  std::optional<std::string> out;
  if (::bind(fd, reinterpret_cast<sockaddr*>(&la), sizeof la) == 0 &&
      ::connect(fd, reinterpret_cast<sockaddr*>(&da), sizeof da) == 0 &&
      ::send(fd, request.data(), request.size(), 0) == static_cast<ssize_t>(request.size())) {
    std::string got;
    char buf[512];
    ssize_t n;
    while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) {
      got.append(buf, static_cast<std::size_t>(n));
      if (got.find('\n') != std::string::npos) break;
    }
    if (!got.empty()) out = std::move(got);
  }
  ::close(fd);
  return out;
}

class UdpSocket {
 public:
  /// Binds to `local` (0.0.0.0:0 picks any).
  explicit UdpSocket(Endpoint local = {}) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw InputError(std::string("socket: ") + std::strerror(errno));
    auto sa = to_sockaddr(local);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
      auto err = errno;
      ::close(fd_);
      throw InputError(std::string("bind: ") + std::strerror(err));
    }
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }

  Endpoint local() const {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    return Endpoint{Ipv4{ntohl(sa.sin_addr.s_addr)}, ntohs(sa.sin_port)};
  }

  void set_ttl(int ttl) { ::setsockopt(fd_, IPPROTO_IP, IP_TTL, &ttl, sizeof ttl); }

  void send_to(const Endpoint& to, std::string_view bytes) {
    auto sa = to_sockaddr(to);
    ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&sa), sizeof sa);
  }

  /// Waits until the monotonic clock reaches `deadline`.
  std::optional<std::pair<Endpoint, std::string>> receive(double deadline) {
    while (true) {
      auto left = deadline - monotonic_seconds();
      if (left <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      int rc = ::poll(&p, 1, static_cast<int>(std::ceil(left * 1000)));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) continue;
      char buf[65536];
      sockaddr_in from{};
      socklen_t len = sizeof from;
      auto n = ::recvfrom(fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
      if (n < 0) continue;
      return std::pair{Endpoint{Ipv4{ntohl(from.sin_addr.s_addr)}, ntohs(from.sin_port)}, std::string(buf, static_cast<std::size_t>(n))};
    }
  }

 private:
  int fd_ = -1;
};

}  // namespace cgn::net
