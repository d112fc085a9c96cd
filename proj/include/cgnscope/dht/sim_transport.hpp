// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// DHT peers living on a natsim topology. The crawler's datagrams go
// through the simulated NATs in both directions.

#pragma once

#include <map>
#include <queue>
#include <vector>

#include "cgnscope/dht/crawler.hpp"
#include "cgnscope/natsim/topology.hpp"
#include "cgnscope/natsim/topology_file.hpp"

namespace cgn::dht {

class SimTransport : public DatagramTransport {
 public:
  struct Node {
    sim::HostId host = 0;
    Endpoint local;
    NodeId id;
    bool responsive = true;
    std::vector<CompactNodeInfo> contacts;
  };

  /// `crawler_host` must sit in the core and own `crawler_ep.ip`.
  SimTransport(sim::Topology& topo, sim::HostId crawler_host, Endpoint crawler_ep, double latency = 0.02)
      : topo_(topo), crawler_host_(crawler_host), crawler_ep_(crawler_ep), latency_(latency), now_(topo.clock()) {}

  std::size_t add_node(sim::HostId host, Endpoint local, NodeId id, bool responsive = true) {
    nodes_.push_back(Node{host, local, id, responsive, {}});
    by_local_[{host, local}] = nodes_.size() - 1;
    return nodes_.size() - 1;
  }

  Node& node(std::size_t i) { return nodes_.at(i); }
  std::size_t node_count() const { return nodes_.size(); }

  /// Sends one packet from node `i` to `dst` so its NATs hold a mapping, and
  /// returns the endpoint the outside world sees. nullopt if it never arrived.
  std::optional<Endpoint> announce(std::size_t i, const Endpoint& dst) {
    const auto& n = nodes_.at(i);
    auto r = topo_.send(n.host, sim::Packet{sim::Proto::Udp, n.local, dst, 64, {}}, now_);
    if (!r.delivered()) return std::nullopt;
    return r.packet.src;
  }

  void send_to(const Endpoint& to, std::string_view bytes) override {
    auto r = topo_.send(crawler_host_, sim::Packet{sim::Proto::Udp, crawler_ep_, to, 64, std::string(bytes)}, now_);
    if (!r.delivered()) return;
    auto it = by_local_.find({*r.to, r.packet.dst});
    if (it == by_local_.end()) return;
    push(now_ + latency_, Event{it->second, std::move(r.packet)});
  }

  std::optional<Datagram> receive(double deadline) override {
    while (!events_.empty() && events_.top().at <= deadline) {
      auto ev = events_.top();
      events_.pop();
      now_ = std::max(now_, ev.at);
      if (ev.node == kCrawler) return Datagram{ev.packet.src, std::move(ev.packet.payload)};
      respond(ev.node, ev.packet);
    }
    now_ = std::max(now_, deadline);
    return std::nullopt;
  }

  double now() const override { return now_; }

 private:
  static constexpr std::size_t kCrawler = static_cast<std::size_t>(-1);

  struct Event {
    std::size_t node;
    sim::Packet packet;
  };
  struct Timed {
    double at;
    std::uint64_t seq;
    std::size_t node;
    sim::Packet packet;
    bool operator>(const Timed& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  sim::Topology& topo_;
  sim::HostId crawler_host_;
  Endpoint crawler_ep_;
  double latency_;
  double now_;
  std::uint64_t seq_ = 0;
  std::vector<Node> nodes_;
  std::map<std::pair<sim::HostId, Endpoint>, std::size_t> by_local_;
  std::priority_queue<Timed, std::vector<Timed>, std::greater<>> events_;

  void push(double at, Event ev) { events_.push(Timed{at, seq_++, ev.node, std::move(ev.packet)}); }

  void respond(std::size_t i, const sim::Packet& in) {
    auto& n = nodes_[i];
    if (!n.responsive) return;
    KrpcMessage q;
    try {
      q = decode_message(in.payload);
    } catch (const ParseError&) {
      return;
    }
    if (q.kind != KrpcMessage::Kind::Query) return;
    KrpcMessage reply;
    if (q.method == "ping") {
      reply = make_ping_response(q.tid, n.id);
    } else if (q.method == "find_node") {
      auto target = q.body.contains("target") && q.body.at("target").is_string() &&
                            q.body.at("target").as_string().size() == 20
                        ? NodeId::from_raw(q.body.at("target").as_string())
                        : n.id;
      reply = make_find_node_response(q.tid, n.id, closest(n.contacts, target, 8));
    } else {
      reply = make_error(q.tid, 204, "Method Unknown");
    }
    auto r = topo_.send(n.host, sim::Packet{sim::Proto::Udp, n.local, in.src, 64, encode_message(reply)}, now_);
    if (r.delivered() && r.to == crawler_host_) push(now_ + latency_, Event{kCrawler, std::move(r.packet)});
  }

  static std::vector<CompactNodeInfo> closest(const std::vector<CompactNodeInfo>& all, const NodeId& target, std::size_t k) {
    std::vector<CompactNodeInfo> out(all);
    auto by_distance = [&](const CompactNodeInfo& a, const CompactNodeInfo& b) {
      return xor_distance(a.id, target) < xor_distance(b.id, target);
    };
    if (out.size() > k) {
      std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), by_distance);
      out.resize(k);
    }
    return out;
  }
};

/// Places a DHT node on every host annotated `dht=<port>`. Each node first
/// sends to the crawler so its NATs hold a mapping, then to every other
/// node's external endpoint; whatever source address arrives becomes a
/// contact, so NATs that hairpin with the source preserved leak internal
/// endpoints the way real peers do. Unanswered hosts (`responsive=no`) are
/// still placed.
inline void place_topology_nodes(SimTransport& net, sim::TopologyDescription& desc, const Endpoint& crawler,
                                 std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0xd47));
  struct Placed {
    std::size_t index;
    Endpoint external;
  };
  std::vector<Placed> placed;
  auto& topo = desc.topology;
  for (sim::HostId h = 0; h < desc.host_attrs.size(); ++h) {
    const auto& attrs = desc.host_attrs[h];
    auto it = attrs.find("dht");
    if (it == attrs.end()) continue;
    Endpoint local{topo.host(h).addresses.front(), cgn::detail::parse_int<std::uint16_t>(it->second, "dht port")};
    auto r = attrs.find("responsive");
    bool responsive = r == attrs.end() || r->second != "no";
    auto i = net.add_node(h, local, NodeId::random(rng), responsive);
    auto sent = topo.send(h, sim::Packet{sim::Proto::Udp, local, crawler, 64, "announce"}, topo.clock());
    if (sent.delivered()) placed.push_back({i, sent.packet.src});
  }
  for (const auto& from : placed)
    for (const auto& to : placed) {
      if (from.index == to.index) continue;
      const auto& a = net.node(from.index);
      auto r = topo.send(a.host, sim::Packet{sim::Proto::Udp, a.local, to.external, 64, "hello"}, topo.clock());
      if (r.delivered() && r.to == net.node(to.index).host)
        net.node(to.index).contacts.push_back({a.id, r.packet.src});
    }
}

}  // namespace cgn::dht
