// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// What the probe algorithms need from the world, simulated or live.

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/natsim/nat.hpp"
#include "cgnscope/probe/stun.hpp"

namespace cgn::probe {

using sim::Proto;

class ProbeDriver {
 public:
  virtual ~ProbeDriver() = default;

  virtual Ipv4 local_ip() const = 0;
  /// A local port not used before in this session.
  virtual std::uint16_t fresh_port() = 0;

  /// One request/reply with the echo server from `port`.
  virtual std::optional<std::string> echo_exchange(Proto proto, std::uint16_t port, std::string_view request) = 0;

  virtual stun::ServerAddresses stun_server() const = 0;
  /// Sends `request` from `port` to `dst`; returns whatever answer reaches `port`.
  virtual std::optional<std::string> stun_exchange(std::uint16_t port, const Endpoint& dst, std::string_view request) = 0;

  // Reachability experiment primitives. The server side is a cooperating
  // probe server that remembers each flow's observed endpoint.
  virtual bool supports_reachability() const { return false; }
  /// Client to probe server with the given TTL; true if the server saw it.
  virtual bool client_send(std::uint16_t, int) { unsupported(); }
  /// Full-TTL packet that opens a flow; returns the endpoint the server saw.
  virtual std::optional<Endpoint> open_flow(std::uint16_t) { unsupported(); }
  /// Server keepalive towards a flow's observed endpoint.
  virtual void server_send(const Endpoint&, int) { unsupported(); }
  /// Full-TTL server packet; true if it reached the client's `port`.
  virtual bool server_probe(const Endpoint&, std::uint16_t) { unsupported(); }

  virtual double now() const = 0;
  /// Waits (virtually or for real) until `t`.
  virtual void advance_to(double t) = 0;

 private:
  [[noreturn]] static void unsupported() {
    throw InputError("this driver cannot run reachability experiments");
  }
};

}  // namespace cgn::probe
