// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Node ids, compact node info and the ping / find_node subset of KRPC.

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/dht/bencode.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/rng.hpp"

namespace cgn::dht {

struct NodeId {
  std::array<std::uint8_t, 20> bytes{};

  static NodeId random(Rng& rng) {
    NodeId id;
    for (std::size_t i = 0; i < 20; i += 8) {
      auto r = rng.next();
      for (std::size_t k = 0; k < 8 && i + k < 20; ++k) id.bytes[i + k] = static_cast<std::uint8_t>(r >> (8 * k));
    }
    return id;
  }

  static NodeId from_raw(std::string_view raw) {
    if (raw.size() != 20) throw ParseError("node id must be 20 bytes, got " + std::to_string(raw.size()));
    NodeId id;
    for (std::size_t i = 0; i < 20; ++i) id.bytes[i] = static_cast<std::uint8_t>(raw[i]);
    return id;
  }

  static NodeId from_hex(std::string_view hex) {
    if (hex.size() != 40) throw ParseError("node id hex must be 40 characters");
    auto nib = [&](char c) -> std::uint8_t {
      if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
      if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
      throw ParseError("bad hex digit in node id");
    };
    NodeId id;
    for (std::size_t i = 0; i < 20; ++i) id.bytes[i] = static_cast<std::uint8_t>(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
    return id;
  }

  std::string raw() const { return std::string(bytes.begin(), bytes.end()); }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (auto b : bytes) {
      out += kDigits[b >> 4];
      out += kDigits[b & 15];
    }
    return out;
  }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// Bitwise xor; compare results with <=> to order by closeness.
inline NodeId xor_distance(const NodeId& a, const NodeId& b) {
  NodeId d;
  for (std::size_t i = 0; i < 20; ++i) d.bytes[i] = a.bytes[i] ^ b.bytes[i];
  return d;
}

/// Peer identity is the whole (endpoint, nodeid) pair.
struct PeerIdentity {
  Endpoint endpoint;
  NodeId id;
  friend auto operator<=>(const PeerIdentity&, const PeerIdentity&) = default;
};

struct CompactNodeInfo {
  NodeId id;
  Endpoint endpoint;
  friend bool operator==(const CompactNodeInfo&, const CompactNodeInfo&) = default;
};

inline constexpr std::size_t kCompactNodeSize = 26;

inline void encode_compact(const CompactNodeInfo& n, std::string& out) {
  out.append(n.id.bytes.begin(), n.id.bytes.end());
  auto ip = n.endpoint.ip.value;
  for (int s = 24; s >= 0; s -= 8) out += static_cast<char>((ip >> s) & 0xff);
  out += static_cast<char>(n.endpoint.port >> 8);
  out += static_cast<char>(n.endpoint.port & 0xff);
}

inline std::string encode_compact_list(const std::vector<CompactNodeInfo>& nodes) {
  std::string out;
  out.reserve(nodes.size() * kCompactNodeSize);
  for (const auto& n : nodes) encode_compact(n, out);
  return out;
}

/// Rejects anything that is not a whole number of 26-byte entries, which
/// includes the 38-byte IPv6 form.
inline std::vector<CompactNodeInfo> decode_compact_list(std::string_view blob) {
  if (blob.size() % kCompactNodeSize != 0)
    throw ParseError("compact node list length " + std::to_string(blob.size()) + " is not a multiple of 26");
  std::vector<CompactNodeInfo> out;
  out.reserve(blob.size() / kCompactNodeSize);
  auto u8 = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<std::uint8_t>(blob[i])); };
  for (std::size_t off = 0; off < blob.size(); off += kCompactNodeSize) {
    CompactNodeInfo n;
    n.id = NodeId::from_raw(blob.substr(off, 20));
    n.endpoint.ip = Ipv4{u8(off + 20) << 24 | u8(off + 21) << 16 | u8(off + 22) << 8 | u8(off + 23)};
    n.endpoint.port = static_cast<std::uint16_t>(u8(off + 24) << 8 | u8(off + 25));
    out.push_back(n);
  }
  return out;
}

struct KrpcMessage {
  enum class Kind : std::uint8_t { Query, Response, Error } kind = Kind::Query;
  std::string tid;
  std::string method;  ///< queries only
  Dict body;           ///< "a" for queries, "r" for responses
  std::int64_t error_code = 0;
  std::string error_message;

  /// Sender id from the body, if present and well formed.
  std::optional<NodeId> sender() const {
    auto it = body.find("id");
    if (it == body.end() || !it->second.is_string() || it->second.as_string().size() != 20) return std::nullopt;
    return NodeId::from_raw(it->second.as_string());
  }
};

inline Value to_value(const KrpcMessage& m) {
  Dict d;
  d["t"] = m.tid;
  switch (m.kind) {
    case KrpcMessage::Kind::Query:
      d["y"] = "q";
      d["q"] = m.method;
      d["a"] = m.body;
      break;
    case KrpcMessage::Kind::Response:
      d["y"] = "r";
      d["r"] = m.body;
      break;
    case KrpcMessage::Kind::Error:
      d["y"] = "e";
      d["e"] = List{Value(m.error_code), Value(m.error_message)};
      break;
  }
  return d;
}

inline std::string encode_message(const KrpcMessage& m) { return encode(to_value(m)); }

inline KrpcMessage decode_message(std::string_view bytes) {
  auto v = decode(bytes);
  if (!v.is_dict()) throw ParseError("KRPC message is not a dictionary");
  auto field = [&](const char* k) -> const Value& {
    const auto* f = v.find(k);
    if (!f) throw ParseError(std::string("KRPC message lacks '") + k + "'");
    return *f;
  };
  KrpcMessage m;
  m.tid = field("t").as_string();
  const auto& y = field("y").as_string();
  if (y == "q") {
    m.kind = KrpcMessage::Kind::Query;
    m.method = field("q").as_string();
    m.body = field("a").as_dict();
  } else if (y == "r") {
    m.kind = KrpcMessage::Kind::Response;
    m.body = field("r").as_dict();
  } else if (y == "e") {
    m.kind = KrpcMessage::Kind::Error;
    const auto& e = field("e").as_list();
    if (e.size() != 2) throw ParseError("KRPC error must be [code, message]");
    m.error_code = e[0].as_int();
    m.error_message = e[1].as_string();
  } else {
    throw ParseError("unknown KRPC message type '" + y + "'");
  }
  return m;
}

inline KrpcMessage make_ping(std::string tid, const NodeId& self) {
  return {KrpcMessage::Kind::Query, std::move(tid), "ping", Dict{{"id", self.raw()}}, 0, {}};
}

inline KrpcMessage make_find_node(std::string tid, const NodeId& self, const NodeId& target) {
  return {KrpcMessage::Kind::Query, std::move(tid), "find_node", Dict{{"id", self.raw()}, {"target", target.raw()}}, 0, {}};
}

inline KrpcMessage make_ping_response(std::string tid, const NodeId& self) {
  return {KrpcMessage::Kind::Response, std::move(tid), {}, Dict{{"id", self.raw()}}, 0, {}};
}

inline KrpcMessage make_find_node_response(std::string tid, const NodeId& self, const std::vector<CompactNodeInfo>& nodes) {
  return {KrpcMessage::Kind::Response, std::move(tid), {}, Dict{{"id", self.raw()}, {"nodes", encode_compact_list(nodes)}}, 0, {}};
}

inline KrpcMessage make_error(std::string tid, std::int64_t code, std::string msg) {
  return {KrpcMessage::Kind::Error, std::move(tid), {}, {}, code, std::move(msg)};
}

}  // namespace cgn::dht
