// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// ProbeDriver over real sockets: echo (UDP and TCP) and STUN.
// Reachability experiments need a cooperating probe server and are not
// offered here.

#pragma once

#include <map>
#include <memory>
#include <thread>

#include "cgnscope/net/udp.hpp"
#include "cgnscope/probe/driver.hpp"

namespace cgn::probe {

class LiveDriver : public ProbeDriver {
 public:
  LiveDriver(Endpoint echo_server, stun::ServerAddresses stun_server, double timeout = 2.0)
      : echo_(echo_server), stun_(stun_server), timeout_(timeout),
        local_(net::route_source(echo_server.port ? echo_server : stun_server.primary)) {}

  Ipv4 local_ip() const override { return local_; }

  std::uint16_t fresh_port() override {
    auto sock = std::make_unique<net::UdpSocket>(Endpoint{local_, 0});
    auto port = sock->local().port;
    sockets_[port] = std::move(sock);
    return port;
  }

  std::optional<std::string> echo_exchange(Proto proto, std::uint16_t port, std::string_view request) override {
    if (proto == Proto::Tcp) {
      // Release the UDP placeholder; TCP binds the same number itself.
      sockets_.erase(port);
      return net::tcp_exchange({local_, port}, echo_, request, timeout_);
    }
    return udp_exchange(port, echo_, request);
  }

  stun::ServerAddresses stun_server() const override { return stun_; }

  std::optional<std::string> stun_exchange(std::uint16_t port, const Endpoint& dst, std::string_view request) override {
    return udp_exchange(port, dst, request);
  }

  double now() const override { return net::monotonic_seconds(); }

  void advance_to(double t) override {
    auto left = t - now();
    if (left > 0) std::this_thread::sleep_for(std::chrono::duration<double>(left));
  }

 private:
  Endpoint echo_;
  stun::ServerAddresses stun_;
  double timeout_;
  Ipv4 local_;
  std::map<std::uint16_t, std::unique_ptr<net::UdpSocket>> sockets_;

  std::optional<std::string> udp_exchange(std::uint16_t port, const Endpoint& dst, std::string_view request) {
    auto it = sockets_.find(port);
    if (it == sockets_.end()) throw InputError("port " + std::to_string(port) + " was not handed out by this driver");
    it->second->send_to(dst, request);
    auto r = it->second->receive(now() + timeout_);
    if (!r) return std::nullopt;
    return std::move(r->second);
  }
};

}  // namespace cgn::probe
