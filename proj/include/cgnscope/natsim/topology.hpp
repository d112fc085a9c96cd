// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Tree-shaped virtual network of routers, NATs and hosts with a
// virtual clock. Packets are forwarded synchronously; TTL is decremented
// once per traversed node and NAT state is touched before the TTL check,
// so a packet that dies at a NAT still refreshes (or creates) its mapping
// there.

#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/natsim/nat.hpp"

namespace cgn::sim {

using NodeId = std::size_t;
using HostId = std::size_t;

/// The public Internet. Not a hop; it joins every top-level subtree.
inline constexpr NodeId kCore = std::numeric_limits<NodeId>::max();

struct Packet {
  Proto proto = Proto::Udp;
  Endpoint src;
  Endpoint dst;
  int ttl = 64;
  std::string payload;
};

enum class Outcome : std::uint8_t { Delivered, DroppedTtl, DroppedFilter, DroppedNoRoute };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Delivered: return "delivered";
    case Outcome::DroppedTtl: return "dropped-ttl";
    case Outcome::DroppedFilter: return "dropped-filter";
    case Outcome::DroppedNoRoute: return "dropped-noroute";
  }
  return "?";
}

struct DeliveryResult {
  Outcome outcome = Outcome::DroppedNoRoute;
  std::optional<HostId> to;  ///< receiving host when Delivered
  Packet packet;             ///< the packet as last seen (translated)
  int hop = 0;               ///< 1-based hop index from the sender where it stopped; 0 when delivered
  Seconds time = 0;

  bool delivered() const { return outcome == Outcome::Delivered; }
};

struct TraceRecord {
  Seconds time = 0;
  Proto proto = Proto::Udp;
  Endpoint src;
  Endpoint dst;
  int ttl = 0;
  Outcome outcome = Outcome::DroppedNoRoute;
  int hop = 0;

  /// `time proto src dst ttl verdict hop`
  std::string to_line() const {
    char t[32];
    std::snprintf(t, sizeof t, "%.3f", time);
    return std::string(t) + ' ' + to_string(proto) + ' ' + src.to_string() + ' ' + dst.to_string() + ' ' +
           std::to_string(ttl) + ' ' + to_string(outcome) + ' ' + std::to_string(hop);
  }
};

class Topology {
 public:
  enum class NodeKind : std::uint8_t { Router, Nat };

  struct Node {
    std::string name;
    NodeKind kind = NodeKind::Router;
    NodeId parent = kCore;
    std::unique_ptr<NatDevice> nat;
  };

  struct Host {
    std::string name;
    std::vector<Ipv4> addresses;
    NodeId attach = kCore;
  };

  explicit Topology(std::uint64_t seed = 0) : seed_(seed) {}

  Topology(Topology&&) = default;
  Topology& operator=(Topology&&) = default;

  NodeId add_router(std::string name, NodeId parent = kCore) {
    check_node(parent);
    nodes_.push_back(Node{std::move(name), NodeKind::Router, parent, nullptr});
    return nodes_.size() - 1;
  }

  NodeId add_nat(std::string name, NatConfig cfg, NodeId parent = kCore) {
    check_node(parent);
    auto id = nodes_.size();
    auto nat = std::make_unique<NatDevice>(std::move(cfg), Rng::mix(seed_, id));
    auto realm = inner_realm(parent);
    for (auto ip : nat->config().external_pool) register_address(realm, ip, Target{false, id});
    nodes_.push_back(Node{std::move(name), NodeKind::Nat, parent, std::move(nat)});
    return id;
  }

  HostId add_host(std::string name, std::vector<Ipv4> addresses, NodeId attach = kCore) {
    check_node(attach);
    if (addresses.empty()) throw InputError("host '" + name + "' has no address");
    auto id = hosts_.size();
    auto realm = inner_realm(attach);
    for (auto ip : addresses) register_address(realm, ip, Target{true, id});
    hosts_.push_back(Host{std::move(name), std::move(addresses), attach});
    return id;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t host_count() const { return hosts_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Host& host(HostId id) const { return hosts_.at(id); }

  NatDevice& nat(NodeId id) {
    auto& n = nodes_.at(id);
    if (!n.nat) throw InputError("node '" + n.name + "' is not a NAT");
    return *n.nat;
  }
  const NatDevice& nat(NodeId id) const { return const_cast<Topology*>(this)->nat(id); }

  std::optional<NodeId> find_node(std::string_view name) const {
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].name == name) return i;
    return std::nullopt;
  }
  std::optional<HostId> find_host(std::string_view name) const {
    for (HostId i = 0; i < hosts_.size(); ++i)
      if (hosts_[i].name == name) return i;
    return std::nullopt;
  }

  /// Nodes between `h` and the core, nearest first. Index i holds hop i+1
  /// of any path from `h` to a host in the core.
  std::vector<NodeId> uplink(HostId h) const {
    std::vector<NodeId> out;
    for (auto n = hosts_.at(h).attach; n != kCore; n = nodes_[n].parent) out.push_back(n);
    return out;
  }

  Seconds clock() const { return clock_; }

  /// Advances the clock to `now` and drops expired mappings in every NAT.
  std::size_t expire(Seconds now) {
    if (now < clock_) throw InputError("virtual clock cannot go backwards");
    clock_ = now;
    std::size_t removed = 0;
    for (auto& n : nodes_)
      if (n.nat) removed += n.nat->expire(now);
    return removed;
  }

  /// Injects `pkt` at host `from` at virtual time `at`.
  DeliveryResult send(HostId from, Packet pkt, Seconds at) {
    if (from >= hosts_.size()) throw InputError("unknown host id " + std::to_string(from));
    if (pkt.ttl < 1 || pkt.ttl > 255) throw InputError("packet TTL must be in 1..255");
    const auto& sender = hosts_[from];
    if (std::find(sender.addresses.begin(), sender.addresses.end(), pkt.src.ip) == sender.addresses.end())
      throw InputError("host '" + sender.name + "' does not own source address " + pkt.src.ip.to_string());
    expire(at);

    TraceRecord rec{at, pkt.proto, pkt.src, pkt.dst, pkt.ttl, Outcome::DroppedNoRoute, 0};
    auto result = forward(from, std::move(pkt));
    result.time = at;
    rec.outcome = result.outcome;
    rec.hop = result.hop;
    if (tracing_) trace_.push_back(rec);
    return result;
  }

  void set_tracing(bool on) { tracing_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  std::string trace_text() const {
    std::string out;
    for (const auto& r : trace_) out += r.to_line() + '\n';
    return out;
  }

 private:
  struct Target {
    bool is_host = false;
    std::size_t id = 0;
  };

  void check_node(NodeId id) const {
    if (id != kCore && id >= nodes_.size()) throw InputError("unknown node id " + std::to_string(id));
  }

  /// The address realm a node's downstream side belongs to.
  NodeId inner_realm(NodeId n) const {
    while (n != kCore && nodes_[n].kind != NodeKind::Nat) n = nodes_[n].parent;
    return n;
  }

  void register_address(NodeId realm, Ipv4 ip, Target t) {
    if (realm != kCore) {
      const auto& range = nodes_[realm].nat->config().internal_range;
      if (!range.contains(ip))
        throw InputError(ip.to_string() + " is outside internal range " + range.to_string() + " of '" +
                         nodes_[realm].name + "'");
    }
    auto& reg = realms_[realm];
    if (!reg.emplace(ip, t).second) throw InputError("address " + ip.to_string() + " assigned twice");
  }

  /// Nodes from `start` upward, stopping below `realm`.
  std::vector<NodeId> chain_from(NodeId start, NodeId realm) const {
    std::vector<NodeId> out;
    for (auto n = start; n != realm && n != kCore; n = nodes_[n].parent) out.push_back(n);
    return out;
  }

  /// Node sequence from the end of `up` to the end of `down` through their
  /// lowest common node.
  static std::vector<NodeId> join(const std::vector<NodeId>& up, const std::vector<NodeId>& down) {
    std::vector<NodeId> path;
    for (std::size_t i = 0; i < up.size(); ++i) {
      auto it = std::find(down.begin(), down.end(), up[i]);
      if (it != down.end()) {
        path.insert(path.end(), up.begin(), up.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        for (auto d = std::make_reverse_iterator(it); d != down.rend(); ++d) path.push_back(*d);
        return path;
      }
    }
    path = up;
    path.insert(path.end(), down.rbegin(), down.rend());
    return path;
  }

  DeliveryResult forward(HostId from, Packet pkt) {
    const auto now = clock_;
    int hop = 0;
    auto drop = [&](Outcome o) { return DeliveryResult{o, std::nullopt, pkt, hop, now}; };
    auto decrement = [&]() { return --pkt.ttl > 0; };

    NodeId realm = inner_realm(hosts_[from].attach);
    std::vector<NodeId> here = chain_from(hosts_[from].attach, realm);

    // Each NAT decrements TTL at least once, so this terminates within 255 rounds.
    while (true) {
      const auto& reg = realms_[realm];
      auto target = reg.find(pkt.dst.ip);
      if (target != reg.end()) {
        const auto& t = target->second;
        std::vector<NodeId> there = t.is_host ? chain_from(hosts_[t.id].attach, realm)
                                              : chain_from(nodes_[t.id].parent, realm);
        for (auto n : join(here, there)) {
          ++hop;
          (void)n;
          if (!decrement()) return drop(Outcome::DroppedTtl);
        }
        if (t.is_host) return DeliveryResult{Outcome::Delivered, t.id, pkt, 0, now};

        // Inbound through the NAT owning dst.
        ++hop;
        auto& nat = *nodes_[t.id].nat;
        auto in = nat.inbound(pkt.proto, pkt.dst, pkt.src, now);
        if (in.status != InboundStatus::Accepted) return drop(Outcome::DroppedFilter);
        pkt.dst = in.entry->int_ep;
        if (!decrement()) return drop(Outcome::DroppedTtl);
        realm = t.id;
        here.clear();
        continue;
      }

      if (realm == kCore) {
        for (std::size_t i = 0; i < here.size(); ++i) ++hop;
        return drop(Outcome::DroppedNoRoute);
      }

      // Up to the NAT that bounds this realm.
      for (auto n : here) {
        ++hop;
        (void)n;
        if (!decrement()) return drop(Outcome::DroppedTtl);
      }
      ++hop;
      auto& nat = *nodes_[realm].nat;
      if (nat.owns(pkt.dst.ip)) {
        if (nat.config().hairpin == Hairpin::Off) return drop(Outcome::DroppedNoRoute);
        const auto& out = nat.outbound(pkt.proto, pkt.src, pkt.dst, now);
        auto translated = out.ext_ep;
        auto in = nat.inbound(pkt.proto, pkt.dst, translated, now);
        if (in.status != InboundStatus::Accepted) return drop(Outcome::DroppedFilter);
        if (nat.config().hairpin == Hairpin::Translate) pkt.src = translated;
        pkt.dst = in.entry->int_ep;
        if (!decrement()) return drop(Outcome::DroppedTtl);
        here.clear();
        continue;
      }
      pkt.src = nat.outbound(pkt.proto, pkt.src, pkt.dst, now).ext_ep;
      if (!decrement()) return drop(Outcome::DroppedTtl);
      auto outer = inner_realm(nodes_[realm].parent);
      here = chain_from(nodes_[realm].parent, outer);
      realm = outer;
    }
  }

  std::uint64_t seed_ = 0;
  std::vector<Node> nodes_;
  std::vector<Host> hosts_;
  std::map<NodeId, std::map<Ipv4, Target>> realms_;
  Seconds clock_ = 0;
  bool tracing_ = true;
  std::vector<TraceRecord> trace_;
};

}  // namespace cgn::sim
