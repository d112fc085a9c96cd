// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Line-oriented topology description and event scripts.
///
/// Topology file:
///
///     seed 7
///     router r1 parent=core
///     nat cgn parent=r1 mapping_type=symmetric port_alloc=random-chunk:4096
///         pooling=paired external_pool=198.51.100.1,198.51.100.2 udp_timeout=60
///         tcp_timeout=7200 hairpin=preserve-source internal_range=100.64.0.0/10
///     host alice at=cgn addr=100.64.0.10 dht=6881
///     host server at=core addr=203.0.113.1,203.0.113.2 role=server
///     route 198.51.100.0/24 64500
///
/// `external_pool` also accepts a CIDR (every address in it). Trailing
/// backslashes join lines. Unknown keys on host lines are kept as
/// annotations for drivers (dht port, role, asn).
///
/// Event script:
///
///     0   send alice udp 5000 203.0.113.1:3478 ttl=64
///     30  expire

#pragma once

#include <optional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/natsim/topology.hpp"

namespace cgn::sim {

struct TopologyDescription {
  Topology topology;
  std::uint64_t seed = 0;
  /// Per-host annotations (`dht`, `role`, `asn`, ...), indexed by HostId.
  std::vector<std::map<std::string, std::string>> host_attrs;
  /// Optional `route prefix asn` lines.
  std::vector<RouteEntry> routes;

  std::optional<HostId> host_with_role(std::string_view role) const {
    for (HostId h = 0; h < host_attrs.size(); ++h) {
      auto it = host_attrs[h].find("role");
      if (it != host_attrs[h].end() && it->second == role) return h;
    }
    return std::nullopt;
  }
};

namespace detail {

inline std::vector<std::string> logical_lines(std::istream& in) {
  std::vector<std::string> out;
  std::string line, pending;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto body = std::string(cgn::detail::trim(line));
    bool cont = !body.empty() && body.back() == '\\';
    if (cont) body.pop_back();
    pending += body + ' ';
    if (!cont) {
      auto t = std::string(cgn::detail::trim(pending));
      if (!t.empty()) out.push_back(t);
      pending.clear();
    }
  }
  auto t = std::string(cgn::detail::trim(pending));
  if (!t.empty()) out.push_back(t);
  return out;
}

inline std::vector<std::string> words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

inline std::map<std::string, std::string> key_values(const std::vector<std::string>& w, std::size_t from) {
  std::map<std::string, std::string> kv;
  for (auto i = from; i < w.size(); ++i) {
    auto eq = w[i].find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + w[i] + "'");
    kv[w[i].substr(0, eq)] = w[i].substr(eq + 1);
  }
  return kv;
}

inline std::vector<Ipv4> parse_address_list(std::string_view s) {
  std::vector<Ipv4> out;
  for (auto part : cgn::detail::split(s, ',')) {
    if (part.find('/') != std::string_view::npos) {
      auto c = Cidr::parse(part);
      if (c.length < 16) throw ParseError("pool prefix too large: " + c.to_string());
      for (std::uint64_t i = 0; i < c.size(); ++i) out.push_back(Ipv4{c.base.value + static_cast<std::uint32_t>(i)});
    } else {
      out.push_back(Ipv4::parse(part));
    }
  }
  return out;
}

inline NatConfig parse_nat_config(std::map<std::string, std::string>& kv) {
  NatConfig cfg;
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("mapping_type")) {
    auto m = mapping_type_from_string(*v);
    if (!m) throw ParseError("unknown mapping_type '" + *v + "'");
    cfg.mapping = *m;
  }
  if (auto v = take("port_alloc")) {
    auto a = port_alloc_from_string(*v);
    if (!a) throw ParseError("unknown port_alloc '" + *v + "'");
    cfg.port_alloc = *a;
  }
  if (auto v = take("pooling")) {
    auto p = pooling_from_string(*v);
    if (!p) throw ParseError("unknown pooling '" + *v + "'");
    cfg.pooling = *p;
  }
  if (auto v = take("hairpin")) {
    auto h = hairpin_from_string(*v);
    if (!h) throw ParseError("unknown hairpin '" + *v + "'");
    cfg.hairpin = *h;
  }
  if (auto v = take("external_pool")) cfg.external_pool = parse_address_list(*v);
  if (auto v = take("udp_timeout")) cfg.udp_timeout = cgn::detail::parse_int<std::uint32_t>(*v, "udp_timeout");
  if (auto v = take("tcp_timeout")) cfg.tcp_timeout = cgn::detail::parse_int<std::uint32_t>(*v, "tcp_timeout");
  if (auto v = take("internal_range")) cfg.internal_range = Cidr::parse(*v);
  if (!kv.empty()) throw ParseError("unknown NAT key '" + kv.begin()->first + "'");
  return cfg;
}

}  // namespace detail

/// `seed` overrides any `seed` line in the file.
inline TopologyDescription read_topology(std::istream& in, std::optional<std::uint64_t> seed = std::nullopt) {
  auto lines = detail::logical_lines(in);
  TopologyDescription desc{Topology{0}, 0, {}, {}};
  // The seed must be known before the first NAT is created.
  for (const auto& l : lines) {
    auto w = detail::words(l);
    if (w[0] == "seed") {
      if (w.size() != 2) throw ParseError("expected 'seed N'");
      desc.seed = cgn::detail::parse_int<std::uint64_t>(w[1], "seed");
    }
  }
  if (seed) desc.seed = *seed;
  desc.topology = Topology{desc.seed};
  auto& topo = desc.topology;

  auto resolve_node = [&](const std::string& name) -> NodeId {
    if (name == "core") return kCore;
    auto id = topo.find_node(name);
    if (!id) throw ParseError("unknown node '" + name + "'");
    return *id;
  };

  std::size_t n = 0;
  for (const auto& l : lines) {
    ++n;
    try {
      auto w = detail::words(l);
      const auto& kind = w[0];
      if (kind == "seed") continue;
      if (kind == "route") {
        if (w.size() != 3) throw ParseError("expected 'route prefix asn'");
        desc.routes.push_back({Cidr::parse(w[1]), cgn::detail::parse_int<Asn>(w[2], "asn")});
        continue;
      }
      if (w.size() < 2) throw ParseError("missing name");
      if (topo.find_node(w[1]) || topo.find_host(w[1])) throw ParseError("duplicate name '" + w[1] + "'");
      auto kv = detail::key_values(w, 2);
      if (kind == "router") {
        auto parent = kv.contains("parent") ? resolve_node(kv["parent"]) : kCore;
        topo.add_router(w[1], parent);
      } else if (kind == "nat") {
        auto parent = kv.contains("parent") ? resolve_node(kv["parent"]) : kCore;
        kv.erase("parent");
        topo.add_nat(w[1], detail::parse_nat_config(kv), parent);
      } else if (kind == "host") {
        auto at = kv.contains("at") ? resolve_node(kv["at"]) : kCore;
        if (!kv.contains("addr")) throw ParseError("host needs addr=");
        auto addrs = detail::parse_address_list(kv["addr"]);
        kv.erase("at");
        kv.erase("addr");
        topo.add_host(w[1], std::move(addrs), at);
        desc.host_attrs.push_back(std::move(kv));
      } else {
        throw ParseError("unknown directive '" + kind + "'");
      }
    } catch (const ParseError& e) {
      throw ParseError("topology line " + std::to_string(n) + ": " + e.what());
    } catch (const InputError& e) {
      throw ParseError("topology line " + std::to_string(n) + ": " + e.what());
    }
  }
  return desc;
}

struct SimEvent {
  enum class Kind : std::uint8_t { Send, Expire } kind = Kind::Send;
  Seconds at = 0;
  HostId host = 0;
  Packet packet;
};

inline std::vector<SimEvent> read_events(std::istream& in, const Topology& topo) {
  std::vector<SimEvent> out;
  std::size_t n = 0;
  for (const auto& l : detail::logical_lines(in)) {
    ++n;
    try {
      auto w = detail::words(l);
      if (w.size() < 2) throw ParseError("expected 'time verb ...'");
      SimEvent ev;
      ev.at = std::stod(w[0]);
      if (w[1] == "expire") {
        ev.kind = SimEvent::Kind::Expire;
      } else if (w[1] == "send") {
        if (w.size() < 6) throw ParseError("expected 'time send host proto src_port dst_ip:port [ttl=N] [src=ip]'");
        auto h = topo.find_host(w[2]);
        if (!h) throw ParseError("unknown host '" + w[2] + "'");
        ev.host = *h;
        if (w[3] == "udp") ev.packet.proto = Proto::Udp;
        else if (w[3] == "tcp") ev.packet.proto = Proto::Tcp;
        else throw ParseError("unknown protocol '" + w[3] + "'");
        ev.packet.src = Endpoint{topo.host(*h).addresses.front(), cgn::detail::parse_int<std::uint16_t>(w[4], "port")};
        ev.packet.dst = Endpoint::parse(w[5]);
        auto kv = detail::key_values(w, 6);
        if (kv.contains("ttl")) ev.packet.ttl = cgn::detail::parse_int<int>(kv["ttl"], "ttl");
        if (kv.contains("src")) ev.packet.src.ip = Ipv4::parse(kv["src"]);
        if (kv.contains("payload")) ev.packet.payload = kv["payload"];
      } else {
        throw ParseError("unknown event '" + w[1] + "'");
      }
      out.push_back(std::move(ev));
    } catch (const std::invalid_argument&) {
      throw ParseError("event line " + std::to_string(n) + ": bad time");
    } catch (const ParseError& e) {
      throw ParseError("event line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Runs an event script; returns the resulting trace text.
inline std::string run_events(Topology& topo, const std::vector<SimEvent>& events) {
  for (const auto& ev : events) {
    if (ev.kind == SimEvent::Kind::Expire) topo.expire(ev.at);
    else topo.send(ev.host, ev.packet, ev.at);
  }
  return topo.trace_text();
}

}  // namespace cgn::sim
