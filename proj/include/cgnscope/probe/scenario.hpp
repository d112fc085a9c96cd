// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Ready-made NAT44 / NAT444 access networks with a probe server, and
// measurement sessions generated by probing them.

#pragma once

#include <set>
#include <vector>

#include "cgnscope/dht/population.hpp"
#include "cgnscope/natsim/topology.hpp"
#include "cgnscope/probe/ports.hpp"
#include "cgnscope/probe/sim_driver.hpp"
#include "cgnscope/probe/stun_classify.hpp"
#include "cgnscope/probe/ttl.hpp"
#include "cgnscope/session_record.hpp"

namespace cgn::probe {

/// Subscriber side first: [CPE] -> routers_before -> [CGN] -> routers_after -> core.
struct ChainSpec {
  std::optional<sim::NatConfig> cpe;  ///< one per subscriber; its external address is assigned here
  std::size_t routers_before = 0;
  std::optional<sim::NatConfig> cgn;  ///< an empty pool is filled from `public_prefix`
  std::size_t routers_after = 0;
  std::size_t subscribers = 1;
  Cidr public_prefix = dht::fixture_prefix(0);
};

struct ProbeNetwork {
  sim::Topology topo;
  SimServer server;
  std::vector<sim::HostId> clients;
  std::vector<std::optional<Ipv4>> cpe_external;
  int cpe_hop = 0;  ///< 0 when absent
  int cgn_hop = 0;
  std::optional<sim::NodeId> cgn;
};

inline ProbeNetwork build_chain(const ChainSpec& spec, std::uint64_t seed) {
  ProbeNetwork net{sim::Topology{seed}, {}, {}, {}, 0, 0, std::nullopt};
  Rng rng(Rng::mix(seed, 0xc4a1));
  auto& topo = net.topo;
  net.server = add_sim_server(topo, Ipv4::parse("203.0.113.1"), Ipv4::parse("203.0.113.2"));

  sim::NodeId parent = sim::kCore;
  for (std::size_t i = 0; i < spec.routers_after; ++i) parent = topo.add_router("core-r" + std::to_string(i), parent);
  std::optional<Cidr> inner;
  if (spec.cgn) {
    auto cfg = *spec.cgn;
    if (cfg.external_pool.empty())
      for (std::uint32_t i = 1; i <= 4; ++i) cfg.external_pool.push_back(Ipv4{spec.public_prefix.base.value + 0xff00 + i});
    inner = cfg.internal_range;
    parent = topo.add_nat("cgn", cfg, parent);
    net.cgn = parent;
  }
  for (std::size_t i = 0; i < spec.routers_before; ++i) parent = topo.add_router("agg-r" + std::to_string(i), parent);
  net.cpe_hop = spec.cpe ? 1 : 0;
  net.cgn_hop = spec.cgn ? net.cpe_hop + static_cast<int>(spec.routers_before) + 1 : 0;

  // Outer-side addresses for CPEs (or for bare clients): one per subscriber,
  // spread over distinct /24s where the space allows.
  std::vector<Ipv4> outer;
  if (inner) {
    std::set<Ipv4> blocks;
    auto n24 = inner->size() / 256;
    while (outer.size() < spec.subscribers) {
      auto block = Ipv4{inner->base.value + static_cast<std::uint32_t>(rng.uniform(0, n24 - 1)) * 256};
      if (blocks.size() < n24 && !blocks.insert(block).second) continue;
      auto ip = Ipv4{block.value + static_cast<std::uint32_t>(rng.uniform(2, 254))};
      if (std::find(outer.begin(), outer.end(), ip) == outer.end()) outer.push_back(ip);
    }
  } else {
    for (std::uint32_t i = 0; i < spec.subscribers; ++i) outer.push_back(Ipv4{spec.public_prefix.base.value + 0x100 + i + 1});
  }

  for (std::size_t i = 0; i < spec.subscribers; ++i) {
    auto name = std::to_string(i);
    if (spec.cpe) {
      auto cfg = *spec.cpe;
      cfg.external_pool = {outer[i]};
      auto cpe = topo.add_nat("cpe" + name, cfg, parent);
      auto dev = Ipv4{Ipv4::parse("192.168.0.0").value + static_cast<std::uint32_t>(rng.uniform(0, 1)) * 256 +
                      static_cast<std::uint32_t>(rng.uniform(2, 254))};
      if (!cfg.internal_range.contains(dev)) dev = Ipv4{cfg.internal_range.base.value + 2};
      net.clients.push_back(topo.add_host("client" + name, {dev}, cpe));
      net.cpe_external.push_back(outer[i]);
    } else {
      net.clients.push_back(topo.add_host("client" + name, {outer[i]}, parent));
      net.cpe_external.push_back(std::nullopt);
    }
  }
  return net;
}

inline sim::NatConfig home_cpe_config() {
  sim::NatConfig c;
  c.mapping = sim::MappingType::PortRestricted;
  c.port_alloc = {sim::PortStrategy::Preserve, 0};
  c.internal_range = Cidr::parse("192.168.0.0/16");
  c.udp_timeout = 300;
  return c;
}

inline sim::NatConfig carrier_nat_config() {
  sim::NatConfig c;
  c.mapping = sim::MappingType::PortRestricted;
  c.port_alloc = {sim::PortStrategy::Random, 0};
  c.internal_range = Cidr::parse("100.64.0.0/10");
  c.udp_timeout = 65;
  return c;
}

struct SessionFixtureSpec {
  Asn asn = 0;
  Access access = Access::NonCellular;
  bool carrier_nat = true;
  std::size_t sessions = 40;
  double upnp_share = 0.6;  ///< chance a session learns ip_cpe
  Cidr public_prefix = dht::fixture_prefix(0);
  bool stun = false;
  bool ttl = false;
};

/// One subscriber per session. Cellular clients sit directly behind the
/// carrier NAT (or on public space); non-cellular ones behind their own CPE.
inline std::vector<SessionRecord> synth_sessions(const SessionFixtureSpec& spec, std::uint64_t seed) {
  ChainSpec chain;
  chain.subscribers = spec.sessions;
  chain.public_prefix = spec.public_prefix;
  if (spec.access == Access::NonCellular) chain.cpe = home_cpe_config();
  if (spec.carrier_nat) {
    chain.cgn = carrier_nat_config();
    chain.routers_before = 1;
  }
  auto net = build_chain(chain, seed);
  Rng rng(Rng::mix(seed, 0x5e55));
  std::vector<SessionRecord> out;
  for (std::size_t i = 0; i < net.clients.size(); ++i) {
    SimDriver d(net.topo, net.clients[i], net.server, Rng::mix(seed, i));
    SessionRecord s;
    s.session_id = std::to_string(spec.asn) + "-" + std::to_string(i);
    s.asn = spec.asn;
    s.access = spec.access;
    s.ip_dev = d.local_ip();
    s.flows = collect_port_trace(d);
    if (s.flows.empty()) throw Unreachable("fixture client cannot reach the echo server");
    s.ip_pub = s.flows.front().observed_ip;
    if (net.cpe_external[i] && rng.chance(spec.upnp_share)) s.ip_cpe = net.cpe_external[i];
    if (spec.stun) s.stun = stun_classify(d, Rng::mix(seed, i + 1));
    if (spec.ttl) s.ttl_result = ttl_enumerate(d);
    s.ts = d.now();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cgn::probe
