// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Binding request/response subset of STUN, including the
// CHANGE-REQUEST attribute the classic type-discovery tests need.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/rng.hpp"

namespace cgn::probe::stun {

inline constexpr std::uint32_t kMagicCookie = 0x2112A442;
inline constexpr std::uint16_t kBindingRequest = 0x0001;
inline constexpr std::uint16_t kBindingResponse = 0x0101;

inline constexpr std::uint16_t kAttrMappedAddress = 0x0001;
inline constexpr std::uint16_t kAttrChangeRequest = 0x0003;
inline constexpr std::uint16_t kAttrXorMappedAddress = 0x0020;
inline constexpr std::uint16_t kAttrResponseOrigin = 0x802b;
inline constexpr std::uint16_t kAttrOtherAddress = 0x802c;

inline constexpr std::uint32_t kChangeIp = 0x4;
inline constexpr std::uint32_t kChangePort = 0x2;

using TransactionId = std::array<std::uint8_t, 12>;

struct Message {
  std::uint16_t type = kBindingRequest;
  TransactionId tid{};
  std::optional<std::uint32_t> change_request;
  std::optional<Endpoint> mapped;
  std::optional<Endpoint> xor_mapped;
  std::optional<Endpoint> response_origin;
  std::optional<Endpoint> other_address;

  /// XOR-MAPPED-ADDRESS wins over MAPPED-ADDRESS when both are present.
  std::optional<Endpoint> reflexive() const { return xor_mapped ? xor_mapped : mapped; }
  friend bool operator==(const Message&, const Message&) = default;
};

inline TransactionId random_tid(Rng& rng) {
  TransactionId t{};
  auto a = rng.next(), b = rng.next();
  for (int i = 0; i < 8; ++i) t[i] = static_cast<std::uint8_t>(a >> (8 * i));
  for (int i = 0; i < 4; ++i) t[8 + i] = static_cast<std::uint8_t>(b >> (8 * i));
  return t;
}

namespace detail {

inline void put16(std::string& out, std::uint32_t v) {
  out += static_cast<char>((v >> 8) & 0xff);
  out += static_cast<char>(v & 0xff);
}
inline void put32(std::string& out, std::uint32_t v) {
  put16(out, v >> 16);
  put16(out, v & 0xffff);
}
inline std::uint32_t get16(std::string_view s, std::size_t i) {
  return static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i])) << 8 | static_cast<std::uint8_t>(s[i + 1]);
}
inline std::uint32_t get32(std::string_view s, std::size_t i) { return get16(s, i) << 16 | get16(s, i + 2); }

inline void put_address(std::string& out, std::uint16_t type, const Endpoint& ep, bool xored) {
  put16(out, type);
  put16(out, 8);
  out += '\0';
  out += '\x01';
  put16(out, xored ? ep.port ^ (kMagicCookie >> 16) : ep.port);
  put32(out, xored ? ep.ip.value ^ kMagicCookie : ep.ip.value);
}

inline Endpoint get_address(std::string_view v, bool xored) {
  if (v.size() != 8) throw ParseError("STUN address attribute is not IPv4");
  if (static_cast<std::uint8_t>(v[1]) != 0x01) throw ParseError("STUN address family is not IPv4");
  auto port = static_cast<std::uint16_t>(get16(v, 2));
  auto ip = get32(v, 4);
  if (xored) {
    port = static_cast<std::uint16_t>(port ^ (kMagicCookie >> 16));
    ip ^= kMagicCookie;
  }
  return Endpoint{Ipv4{ip}, port};
}

}  // namespace detail

inline std::string encode(const Message& m) {
  std::string body;
  if (m.change_request) {
    detail::put16(body, kAttrChangeRequest);
    detail::put16(body, 4);
    detail::put32(body, *m.change_request);
  }
  if (m.mapped) detail::put_address(body, kAttrMappedAddress, *m.mapped, false);
  if (m.xor_mapped) detail::put_address(body, kAttrXorMappedAddress, *m.xor_mapped, true);
  if (m.response_origin) detail::put_address(body, kAttrResponseOrigin, *m.response_origin, false);
  if (m.other_address) detail::put_address(body, kAttrOtherAddress, *m.other_address, false);
  std::string out;
  detail::put16(out, m.type);
  detail::put16(out, static_cast<std::uint32_t>(body.size()));
  detail::put32(out, kMagicCookie);
  out.append(m.tid.begin(), m.tid.end());
  return out + body;
}

inline Message decode(std::string_view b) {
  if (b.size() < 20) throw ParseError("STUN message shorter than its header");
  if ((static_cast<std::uint8_t>(b[0]) & 0xc0) != 0) throw ParseError("not a STUN message");
  if (detail::get32(b, 4) != kMagicCookie) throw ParseError("STUN magic cookie mismatch");
  auto len = detail::get16(b, 2);
  if (len % 4 != 0 || len + 20 != b.size()) throw ParseError("STUN length field disagrees with datagram size");
  Message m;
  m.type = static_cast<std::uint16_t>(detail::get16(b, 0));
  for (int i = 0; i < 12; ++i) m.tid[i] = static_cast<std::uint8_t>(b[8 + i]);
  std::size_t off = 20;
  while (off < b.size()) {
    if (off + 4 > b.size()) throw ParseError("truncated STUN attribute header");
    auto type = detail::get16(b, off);
    auto alen = detail::get16(b, off + 2);
    auto padded = (alen + 3) / 4 * 4;
    if (off + 4 + padded > b.size()) throw ParseError("STUN attribute runs past the end");
    auto v = b.substr(off + 4, alen);
    switch (type) {
      case kAttrChangeRequest:
        if (alen != 4) throw ParseError("CHANGE-REQUEST must be 4 bytes");
        m.change_request = detail::get32(v, 0);
        break;
      case kAttrMappedAddress: m.mapped = detail::get_address(v, false); break;
      case kAttrXorMappedAddress: m.xor_mapped = detail::get_address(v, true); break;
      case kAttrResponseOrigin: m.response_origin = detail::get_address(v, false); break;
      case kAttrOtherAddress: m.other_address = detail::get_address(v, false); break;
      default: break;  // unknown attributes are skipped
    }
    off += 4 + padded;
  }
  return m;
}

inline Message binding_request(const TransactionId& tid, std::uint32_t change_flags = 0) {
  Message m;
  m.tid = tid;
  if (change_flags) m.change_request = change_flags;
  return m;
}

/// Test server with two addresses and two ports.
struct ServerAddresses {
  Endpoint primary;    ///< (IP1, port1)
  Endpoint alternate;  ///< (IP2, port2)
};

struct ServerReply {
  Endpoint from;
  std::string bytes;
};

/// Answer for a request that arrived at `local` from `observed`; nullopt if
/// the bytes are not a binding request.
inline std::optional<ServerReply> respond(std::string_view request, const Endpoint& local, const Endpoint& observed,
                                          const ServerAddresses& srv) {
  Message req;
  try {
    req = decode(request);
  } catch (const ParseError&) {
    return std::nullopt;
  }
  if (req.type != kBindingRequest) return std::nullopt;
  auto flags = req.change_request.value_or(0);
  Endpoint from = local;
  if (flags & kChangeIp) from.ip = local.ip == srv.primary.ip ? srv.alternate.ip : srv.primary.ip;
  if (flags & kChangePort) from.port = local.port == srv.primary.port ? srv.alternate.port : srv.primary.port;
  Message resp;
  resp.type = kBindingResponse;
  resp.tid = req.tid;
  resp.xor_mapped = observed;
  resp.mapped = observed;
  resp.response_origin = from;
  resp.other_address = Endpoint{local.ip == srv.primary.ip ? srv.alternate.ip : srv.primary.ip,
                                local.port == srv.primary.port ? srv.alternate.port : srv.primary.port};
  return ServerReply{from, encode(resp)};
}

}  // namespace cgn::probe::stun
