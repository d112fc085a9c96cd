// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic DHT populations on a natsim topology, and the leakage
// records they produce.
///
/// Peers behind a NAT with source-preserving hairpinning learn each other's
/// internal endpoints by talking through the NAT, exactly as the simulator
/// delivers those packets. A CGN spreads its subscribers over several pool
/// addresses; a home NAT has one public address.

#pragma once

#include <map>
#include <set>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/dht/krpc.hpp"
#include "cgnscope/dht/peer_record.hpp"
#include "cgnscope/natsim/topology.hpp"
#include "cgnscope/rng.hpp"

namespace cgn::dht {

enum class AsKind : std::uint8_t {
  CgnPooled,     ///< CGN whose pool is large enough to be detected
  HomeNat,       ///< per-household NATs only
  SubThreshold,  ///< CGN with fewer than five pool addresses
};

inline std::string to_string(AsKind k) {
  switch (k) {
    case AsKind::CgnPooled: return "cgn-pooled";
    case AsKind::HomeNat: return "home-nat";
    case AsKind::SubThreshold: return "sub-threshold";
  }
  return "?";
}

struct DhtAsSpec {
  Asn asn = 0;
  AsKind kind = AsKind::CgnPooled;
  std::size_t pool_size = 8;
  sim::Pooling pooling = sim::Pooling::Paired;
  ReservedRange internal = ReservedRange::R100X;
  std::size_t public_peers = 200;  ///< responsive routable peers in the AS
  std::size_t hairpin_contacts = 3;  ///< other NATed peers each one talks to
};

struct DhtPeer {
  sim::HostId host = 0;
  Endpoint local;
  Endpoint external;  ///< what the rest of the DHT sees
  NodeId id;
  Asn asn = 0;
  std::vector<CompactNodeInfo> contacts;
};

struct DhtPopulation {
  sim::Topology topo;
  std::vector<DhtPeer> peers;
  RoutingTable table;
  std::map<Asn, bool> expect_positive;
  Endpoint rendezvous;  ///< core host every peer announced itself to
};

/// Public /16 for the k-th AS of a fixture; stays clear of reserved space.
inline Cidr fixture_prefix(std::size_t k) {
  return Cidr{Ipv4{static_cast<std::uint32_t>((20 + k / 256) << 24 | (k % 256) << 16)}, 16};
}

namespace detail {

inline Ipv4 at(const Cidr& c, std::uint32_t offset) { return Ipv4{c.base.value + offset}; }

/// Distinct random host addresses inside `range`, avoiding network/broadcast-like ends.
inline std::vector<Ipv4> random_hosts(Rng& rng, const Cidr& range, std::size_t n) {
  std::set<Ipv4> picked;
  auto span = range.size();
  while (picked.size() < n) {
    auto off = static_cast<std::uint32_t>(rng.uniform(1, span - 2));
    auto ip = at(range, off);
    if ((ip.value & 0xff) == 0 || (ip.value & 0xff) == 255) continue;
    picked.insert(ip);
  }
  std::vector<Ipv4> out(picked.begin(), picked.end());
  rng.shuffle(out.begin(), out.end());
  return out;
}

inline std::uint16_t random_port(Rng& rng) { return static_cast<std::uint16_t>(rng.uniform(1025, 65535)); }

}  // namespace detail

/// `peers_per_as` NATed peers go in every AS. Zero yields an empty population.
inline DhtPopulation build_dht_population(const std::vector<DhtAsSpec>& specs, std::size_t peers_per_as,
                                          std::uint64_t seed) {
  DhtPopulation pop{sim::Topology{seed}, {}, {}, {}, {}};
  if (peers_per_as == 0) return pop;
  Rng rng(seed);
  auto& topo = pop.topo;
  pop.rendezvous = Endpoint{Ipv4::parse("192.0.2.1"), 6881};
  topo.add_host("rendezvous", {pop.rendezvous.ip});

  std::vector<std::size_t> public_ids;
  std::map<Asn, std::vector<std::size_t>> natted;  // peers behind NATs, per AS

  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    auto prefix = fixture_prefix(k);
    pop.table.add({prefix, s.asn});
    pop.expect_positive[s.asn] = s.kind == AsKind::CgnPooled;
    auto tag = std::to_string(s.asn);

    for (std::size_t i = 0; i < s.public_peers; ++i) {
      Endpoint ep{detail::at(prefix, 257 + static_cast<std::uint32_t>(i)), detail::random_port(rng)};
      auto h = topo.add_host("pub" + tag + "-" + std::to_string(i), {ep.ip});
      public_ids.push_back(pop.peers.size());
      pop.peers.push_back(DhtPeer{h, ep, ep, NodeId::random(rng), s.asn, {}});
    }

    // Groups of peers that share a NAT (one CGN, or one group per home).
    std::vector<std::vector<std::size_t>> groups;
    auto add_natted = [&](sim::HostId h, Endpoint local, std::vector<std::size_t>& group) {
      group.push_back(pop.peers.size());
      natted[s.asn].push_back(pop.peers.size());
      pop.peers.push_back(DhtPeer{h, local, {}, NodeId::random(rng), s.asn, {}});
    };

    if (s.kind == AsKind::HomeNat) {
      auto homes = (peers_per_as + 1) / 2;
      std::size_t placed = 0;
      for (std::size_t hno = 0; hno < homes; ++hno) {
        sim::NatConfig cfg;
        cfg.mapping = sim::MappingType::FullCone;
        cfg.hairpin = sim::Hairpin::PreserveSource;
        cfg.external_pool = {detail::at(prefix, 0x8000 + static_cast<std::uint32_t>(hno))};
        cfg.internal_range = Cidr::parse("192.168.0.0/16");
        cfg.udp_timeout = 86400;
        auto nat = topo.add_nat("home" + tag + "-" + std::to_string(hno), cfg);
        groups.emplace_back();
        auto devices = std::min<std::size_t>(2, peers_per_as - placed);
        for (auto ip : detail::random_hosts(rng, Cidr::parse("192.168.0.0/23"), devices)) {
          auto h = topo.add_host("dev" + tag + "-" + std::to_string(placed), {ip}, nat);
          add_natted(h, {ip, detail::random_port(rng)}, groups.back());
          ++placed;
        }
      }
    } else {
      sim::NatConfig cfg;
      cfg.mapping = sim::MappingType::FullCone;
      cfg.port_alloc = {sim::PortStrategy::Random, 0};
      cfg.pooling = s.pooling;
      cfg.hairpin = sim::Hairpin::PreserveSource;
      auto pool = s.kind == AsKind::SubThreshold ? std::min<std::size_t>(s.pool_size, 4) : s.pool_size;
      for (std::size_t i = 0; i < pool; ++i) cfg.external_pool.push_back(detail::at(prefix, 0xff00 + static_cast<std::uint32_t>(i) + 1));
      cfg.internal_range = prefix_of(s.internal);
      cfg.udp_timeout = 86400;
      auto nat = topo.add_nat("cgn" + tag, cfg);
      groups.emplace_back();
      std::size_t i = 0;
      for (auto ip : detail::random_hosts(rng, cfg.internal_range, peers_per_as))
        add_natted(topo.add_host("sub" + tag + "-" + std::to_string(i++), {ip}, nat), {ip, detail::random_port(rng)},
                   groups.back());
    }

    // Announce, then talk through the NAT to learn neighbours.
    for (const auto& g : groups)
      for (auto p : g) {
        auto& peer = pop.peers[p];
        auto r = topo.send(peer.host, sim::Packet{sim::Proto::Udp, peer.local, pop.rendezvous, 64, "announce"}, 0);
        if (!r.delivered()) throw InputError("fixture peer could not reach the rendezvous host");
        peer.external = r.packet.src;
      }
    for (const auto& g : groups) {
      if (g.size() < 2) continue;
      for (std::size_t i = 0; i < g.size(); ++i) {
        // a ring keeps every group connected; extra random contacts thicken it
        std::set<std::size_t> targets{g[(i + 1) % g.size()]};
        for (std::size_t c = 1; c < s.hairpin_contacts && targets.size() < g.size() - 1; ++c) {
          auto t = g[rng.index(g.size())];
          if (t != g[i]) targets.insert(t);
        }
        const auto& from = pop.peers[g[i]];
        for (auto t : targets) {
          auto& to = pop.peers[t];
          auto r = topo.send(from.host, sim::Packet{sim::Proto::Udp, from.local, to.external, 64, "ping"}, 0);
          if (r.delivered() && r.to == to.host) to.contacts.push_back({from.id, r.packet.src});
        }
      }
    }
  }

  // Everyone also knows a handful of routable peers.
  if (!public_ids.empty()) {
    for (auto& peer : pop.peers) {
      for (int c = 0; c < 6; ++c) {
        const auto& other = pop.peers[public_ids[rng.index(public_ids.size())]];
        if (other.id != peer.id) peer.contacts.push_back({other.id, other.external});
      }
    }
    // and NATed peers are reachable through their external endpoints
    for (const auto& [asn, ids] : natted)
      for (auto p : ids) {
        auto& holder = pop.peers[public_ids[rng.index(public_ids.size())]];
        holder.contacts.push_back({pop.peers[p].id, pop.peers[p].external});
      }
  }
  return pop;
}

/// Every peer reports its whole contact list once, as a crawl with enough
/// queries would see it.
inline std::vector<PeerRecord> records_from_population(const DhtPopulation& pop) {
  std::vector<PeerRecord> out;
  double ts = 0;
  for (const auto& p : pop.peers) {
    PeerIdentity reporter{p.external, p.id};
    std::set<PeerIdentity> seen;
    for (const auto& c : p.contacts) {
      PeerIdentity reported{c.endpoint, c.id};
      if (!seen.insert(reported).second) continue;
      out.push_back(PeerRecord{ts, reporter, reported, !is_reserved(c.endpoint.ip), std::nullopt});
      ts += 0.001;
    }
  }
  return out;
}

struct PeerFixture {
  std::vector<PeerRecord> records;
  RoutingTable table;
  std::map<Asn, bool> expect_positive;
};

inline PeerFixture synth_peer_records(const std::vector<DhtAsSpec>& specs, std::size_t peers_per_as,
                                      std::uint64_t seed) {
  auto pop = build_dht_population(specs, peers_per_as, seed);
  return PeerFixture{records_from_population(pop), std::move(pop.table), std::move(pop.expect_positive)};
}

}  // namespace cgn::dht
