// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// ProbeDriver on a natsim topology. One server host holds two
// addresses and plays echo server, STUN server and probe server.

#pragma once

#include <set>

#include "cgnscope/natsim/topology.hpp"
#include "cgnscope/probe/driver.hpp"
#include "cgnscope/probe/echo.hpp"
#include "cgnscope/rng.hpp"

namespace cgn::probe {

struct SimServer {
  sim::HostId host = 0;
  Ipv4 primary;
  Ipv4 alternate;
  std::uint16_t echo_port = 7;
  std::uint16_t stun_port = 3478;
  std::uint16_t stun_alt_port = 3479;
  std::uint16_t probe_port = 9000;

  Endpoint echo() const { return {primary, echo_port}; }
  Endpoint probe() const { return {primary, probe_port}; }
  stun::ServerAddresses stun() const { return {{primary, stun_port}, {alternate, stun_alt_port}}; }
};

/// Adds the server host to `topo` in the core.
inline SimServer add_sim_server(sim::Topology& topo, Ipv4 primary, Ipv4 alternate, std::string name = "server") {
  SimServer s;
  s.host = topo.add_host(std::move(name), {primary, alternate});
  s.primary = primary;
  s.alternate = alternate;
  return s;
}

class SimDriver : public ProbeDriver {
 public:
  /// `step` is the virtual time each exchange takes.
  SimDriver(sim::Topology& topo, sim::HostId client, SimServer server, std::uint64_t seed, double step = 0.01)
      : topo_(topo), client_(client), server_(server), rng_(seed), step_(step), now_(topo.clock()) {}

  Ipv4 local_ip() const override { return topo_.host(client_).addresses.front(); }

  std::uint16_t fresh_port() override {
    // Linux ephemeral range; a port is never handed out twice per driver.
    while (true) {
      auto p = static_cast<std::uint16_t>(rng_.uniform(32768, 60999));
      if (used_.insert(p).second) return p;
    }
  }

  std::optional<std::string> echo_exchange(Proto proto, std::uint16_t port, std::string_view request) override {
    auto out = send_from_client(proto, port, server_.echo(), 64, std::string(request));
    if (!out.delivered() || out.to != server_.host || out.packet.dst != server_.echo()) return std::nullopt;
    auto reply = echo_respond(out.packet.payload, out.packet.src);
    if (!reply) return std::nullopt;
    return deliver_to_client(proto, server_.echo(), out.packet.src, 64, *reply, port);
  }

  stun::ServerAddresses stun_server() const override { return server_.stun(); }

  std::optional<std::string> stun_exchange(std::uint16_t port, const Endpoint& dst, std::string_view request) override {
    auto out = send_from_client(Proto::Udp, port, dst, 64, std::string(request));
    if (!out.delivered() || out.to != server_.host) return std::nullopt;
    auto local = out.packet.dst;
    if (local.port != server_.stun_port && local.port != server_.stun_alt_port) return std::nullopt;
    auto reply = stun::respond(out.packet.payload, local, out.packet.src, server_.stun());
    if (!reply) return std::nullopt;
    return deliver_to_client(Proto::Udp, reply->from, out.packet.src, 64, reply->bytes, port);
  }

  bool supports_reachability() const override { return true; }

  bool client_send(std::uint16_t port, int ttl) override {
    auto r = send_from_client(Proto::Udp, port, server_.probe(), ttl, "keepalive", false);
    return r.delivered() && r.to == server_.host;
  }

  std::optional<Endpoint> open_flow(std::uint16_t port) override {
    auto r = send_from_client(Proto::Udp, port, server_.probe(), 64, "open");
    if (!r.delivered() || r.to != server_.host) return std::nullopt;
    return r.packet.src;
  }

  void server_send(const Endpoint& to, int ttl) override {
    sync();
    topo_.send(server_.host, sim::Packet{Proto::Udp, server_.probe(), to, ttl, "keepalive"}, now_);
  }

  bool server_probe(const Endpoint& to, std::uint16_t port) override {
    return deliver_to_client(Proto::Udp, server_.probe(), to, 64, "probe", port).has_value();
  }

  double now() const override { return now_; }
  void advance_to(double t) override { now_ = std::max(now_, t); }

  sim::Topology& topology() { return topo_; }

 private:
  sim::Topology& topo_;
  sim::HostId client_;
  SimServer server_;
  Rng rng_;
  double step_;
  double now_;
  std::set<std::uint16_t> used_;

  void sync() { now_ = std::max(now_, topo_.clock()); }

  // One-way sends (keepalives) take no time, so both ends can refresh at the same instant.
  sim::DeliveryResult send_from_client(Proto proto, std::uint16_t port, const Endpoint& dst, int ttl, std::string payload,
                                       bool waits = true) {
    sync();
    auto r = topo_.send(client_, sim::Packet{proto, {local_ip(), port}, dst, ttl, std::move(payload)}, now_);
    if (waits) now_ += step_ / 2;
    return r;
  }

  std::optional<std::string> deliver_to_client(Proto proto, const Endpoint& from, const Endpoint& to, int ttl,
                                               std::string payload, std::uint16_t port) {
    sync();
    auto r = topo_.send(server_.host, sim::Packet{proto, from, to, ttl, std::move(payload)}, now_);
    now_ += step_ / 2;
    if (!r.delivered() || r.to != client_ || r.packet.dst.port != port) return std::nullopt;
    return std::move(r.packet.payload);
  }
};

}  // namespace cgn::probe
