// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// IPv4 value types, reserved-range classification, and the
// routing-table / RIR lookups every detector builds on.

#pragma once

#include <array>
#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cgnscope/error.hpp"

namespace cgn {

/// IPv4 address held in host byte order.
struct Ipv4 {
  std::uint32_t value = 0;

  constexpr Ipv4() = default;
  constexpr explicit Ipv4(std::uint32_t v) : value(v) {}
  constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

  constexpr auto operator<=>(const Ipv4&) const = default;

  static std::optional<Ipv4> try_parse(std::string_view s) {
    std::uint32_t out = 0;
    for (int i = 0; i < 4; ++i) {
      auto dot = s.find('.');
      if ((i < 3) == (dot == std::string_view::npos)) return std::nullopt;
      auto part = s.substr(0, dot);
      if (part.empty() || part.size() > 3) return std::nullopt;
      unsigned v = 0;
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc{} || p != part.data() + part.size() || v > 255) return std::nullopt;
      out = (out << 8) | v;
      s = i < 3 ? s.substr(dot + 1) : std::string_view{};
    }
    return Ipv4{out};
  }

  static Ipv4 parse(std::string_view s) {
    auto ip = try_parse(s);
    if (!ip) throw ParseError("invalid IPv4 address '" + std::string(s) + "'");
    return *ip;
  }

  std::string to_string() const {
    return std::to_string(value >> 24) + '.' + std::to_string((value >> 16) & 0xff) + '.' +
           std::to_string((value >> 8) & 0xff) + '.' + std::to_string(value & 0xff);
  }

  /// The enclosing /24 block, as its base address.
  constexpr Ipv4 slash24() const { return Ipv4{value & 0xffffff00u}; }
};

/// IPv4 prefix in CIDR form. The base is always masked to the prefix length.
struct Cidr {
  Ipv4 base;
  std::uint8_t length = 0;

  constexpr Cidr() = default;
  constexpr Cidr(Ipv4 b, std::uint8_t len) : base(Ipv4{b.value & mask_for(len)}), length(len) {}

  static constexpr std::uint32_t mask_for(std::uint8_t len) {
    return len == 0 ? 0u : ~std::uint32_t{0} << (32 - len);
  }
  constexpr std::uint32_t mask() const { return mask_for(length); }
  constexpr bool contains(Ipv4 a) const { return (a.value & mask()) == base.value; }
  constexpr bool contains(const Cidr& o) const { return o.length >= length && contains(o.base); }
  constexpr std::uint64_t size() const { return std::uint64_t{1} << (32 - length); }
  constexpr Ipv4 last() const { return Ipv4{base.value | ~mask()}; }

  constexpr auto operator<=>(const Cidr&) const = default;

  static Cidr parse(std::string_view s) {
    auto slash = s.find('/');
    if (slash == std::string_view::npos) throw ParseError("missing '/' in prefix '" + std::string(s) + "'");
    auto ip = Ipv4::parse(s.substr(0, slash));
    auto lens = s.substr(slash + 1);
    unsigned len = 0;
    auto [p, ec] = std::from_chars(lens.data(), lens.data() + lens.size(), len);
    if (ec != std::errc{} || p != lens.data() + lens.size() || len > 32)
      throw ParseError("invalid prefix length in '" + std::string(s) + "'");
    return Cidr{ip, static_cast<std::uint8_t>(len)};
  }

  std::string to_string() const { return base.to_string() + '/' + std::to_string(length); }
};

/// IP:port pair.
struct Endpoint {
  Ipv4 ip;
  std::uint16_t port = 0;

  constexpr auto operator<=>(const Endpoint&) const = default;

  std::string to_string() const { return ip.to_string() + ':' + std::to_string(port); }

  static Endpoint parse(std::string_view s) {
    auto colon = s.rfind(':');
    if (colon == std::string_view::npos) throw ParseError("missing ':' in endpoint '" + std::string(s) + "'");
    unsigned port = 0;
    auto ps = s.substr(colon + 1);
    auto [p, ec] = std::from_chars(ps.data(), ps.data() + ps.size(), port);
    if (ec != std::errc{} || p != ps.data() + ps.size() || port > 65535)
      throw ParseError("invalid port in '" + std::string(s) + "'");
    return Endpoint{Ipv4::parse(s.substr(0, colon)), static_cast<std::uint16_t>(port)};
  }
};

using Asn = std::uint32_t;

// ---------------------------------------------------------------------------
// Reserved ranges

enum class ReservedRange : std::uint8_t { R192X, R172X, R10X, R100X };

inline constexpr std::array<ReservedRange, 4> kReservedRanges = {
    ReservedRange::R192X, ReservedRange::R172X, ReservedRange::R10X, ReservedRange::R100X};

constexpr Cidr prefix_of(ReservedRange r) {
  switch (r) {
    case ReservedRange::R192X: return Cidr{Ipv4{192, 168, 0, 0}, 16};
    case ReservedRange::R172X: return Cidr{Ipv4{172, 16, 0, 0}, 12};
    case ReservedRange::R10X: return Cidr{Ipv4{10, 0, 0, 0}, 8};
    case ReservedRange::R100X: return Cidr{Ipv4{100, 64, 0, 0}, 10};
  }
  return {};
}

inline std::string to_string(ReservedRange r) {
  switch (r) {
    case ReservedRange::R192X: return "192X";
    case ReservedRange::R172X: return "172X";
    case ReservedRange::R10X: return "10X";
    case ReservedRange::R100X: return "100X";
  }
  return "?";
}

inline std::optional<ReservedRange> reserved_range_from_string(std::string_view s) {
  for (auto r : kReservedRanges)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

constexpr std::optional<ReservedRange> classify_reserved(Ipv4 addr) {
  for (auto r : kReservedRanges)
    if (prefix_of(r).contains(addr)) return r;
  return std::nullopt;
}

constexpr bool is_reserved(Ipv4 addr) { return classify_reserved(addr).has_value(); }

/// Loopback, link-local and multicast space can never hold a subscriber
/// address; ingestion refuses it.
constexpr bool is_non_subscriber(Ipv4 addr) {
  return Cidr{Ipv4{127, 0, 0, 0}, 8}.contains(addr) || Cidr{Ipv4{169, 254, 0, 0}, 16}.contains(addr) ||
         Cidr{Ipv4{224, 0, 0, 0}, 4}.contains(addr);
}

inline Ipv4 require_subscriber_address(Ipv4 addr, std::string_view what) {
  if (is_non_subscriber(addr))
    throw InputError(std::string(what) + ": " + addr.to_string() + " is loopback/link-local/multicast");
  return addr;
}

// ---------------------------------------------------------------------------
// Routing table

struct RouteEntry {
  Cidr prefix;
  Asn origin = 0;
};

/// Longest-prefix-match table of (prefix, origin ASN).
class RoutingTable {
 public:
  RoutingTable() = default;
  explicit RoutingTable(const std::vector<RouteEntry>& entries) {
    for (const auto& e : entries) add(e);
  }

  void add(const RouteEntry& e) {
    by_length_[e.prefix.length][e.prefix.base.value] = e.origin;
    ++count_;
  }

  std::optional<RouteEntry> match(Ipv4 addr) const {
    for (int len = 32; len >= 0; --len) {
      const auto& bucket = by_length_[static_cast<std::size_t>(len)];
      if (bucket.empty()) continue;
      auto m = Cidr::mask_for(static_cast<std::uint8_t>(len));
      auto it = bucket.find(addr.value & m);
      if (it != bucket.end()) return RouteEntry{Cidr{Ipv4{it->first}, static_cast<std::uint8_t>(len)}, it->second};
    }
    return std::nullopt;
  }

  bool routed(Ipv4 addr) const { return match(addr).has_value(); }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  /// Distinct origin ASNs, ascending.
  std::vector<Asn> origins() const {
    std::map<Asn, bool> seen;
    for (const auto& bucket : by_length_)
      for (const auto& [_, asn] : bucket) seen[asn] = true;
    std::vector<Asn> out;
    for (const auto& [a, _] : seen) out.push_back(a);
    return out;
  }

  /// Free-form identity of the snapshot (file name, date); carried into reports.
  std::string source;

 private:
  std::array<std::unordered_map<std::uint32_t, Asn>, 33> by_length_{};
  std::size_t count_ = 0;
};

inline std::optional<Asn> lookup_asn(Ipv4 addr, const RoutingTable& table) {
  if (auto m = table.match(addr)) return m->origin;
  return std::nullopt;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits on `sep` and trims each field.
inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto end = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos)));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view s, std::string_view what) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError("invalid " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

/// Calls `fn(line_no, fields)` for every non-blank, non-comment CSV line.
template <typename Fn>
void for_each_csv_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    try {
      fn(line_no, split(body, ','));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace detail

/// Reads `prefix,asn` lines. Prefixes inside loopback, link-local or
/// multicast space are rejected.
inline RoutingTable read_routing_table(std::istream& in, std::string source = {}) {
  RoutingTable table;
  table.source = std::move(source);
  detail::for_each_csv_line(in, [&](std::size_t, const std::vector<std::string_view>& f) {
    if (f.size() != 2) throw ParseError("expected 'prefix,asn'");
    auto prefix = Cidr::parse(f[0]);
    if (is_non_subscriber(prefix.base) || is_non_subscriber(prefix.last()))
      throw ParseError("prefix " + prefix.to_string() + " lies in non-subscriber space");
    table.add({prefix, detail::parse_int<Asn>(f[1], "asn")});
  });
  return table;
}

// ---------------------------------------------------------------------------
// Observed-address categories

enum class AddrKind : std::uint8_t { Private, Unrouted, RoutedMatch, RoutedMismatch };

struct AddrCategory {
  AddrKind kind = AddrKind::Unrouted;
  std::optional<ReservedRange> range;  ///< set iff kind == Private

  bool operator==(const AddrCategory&) const = default;
};

inline std::string to_string(AddrKind k) {
  switch (k) {
    case AddrKind::Private: return "private";
    case AddrKind::Unrouted: return "unrouted";
    case AddrKind::RoutedMatch: return "routed-match";
    case AddrKind::RoutedMismatch: return "routed-mismatch";
  }
  return "?";
}

inline AddrCategory classify_observed(Ipv4 addr, Ipv4 ip_pub, const RoutingTable& table) {
  if (auto r = classify_reserved(addr)) return {AddrKind::Private, r};
  if (!table.routed(addr)) return {AddrKind::Unrouted, std::nullopt};
  return {addr == ip_pub ? AddrKind::RoutedMatch : AddrKind::RoutedMismatch, std::nullopt};
}

// ---------------------------------------------------------------------------
// RIR attribution

enum class Region : std::uint8_t { ARIN, LACNIC, RIPE, AFRINIC, APNIC, Unknown };

inline constexpr std::array<Region, 6> kRegions = {Region::ARIN,    Region::LACNIC, Region::RIPE,
                                                   Region::AFRINIC, Region::APNIC,  Region::Unknown};

inline std::string to_string(Region r) {
  switch (r) {
    case Region::ARIN: return "ARIN";
    case Region::LACNIC: return "LACNIC";
    case Region::RIPE: return "RIPE";
    case Region::AFRINIC: return "AFRINIC";
    case Region::APNIC: return "APNIC";
    case Region::Unknown: return "Unknown";
  }
  return "Unknown";
}

inline std::optional<Region> region_from_string(std::string_view s) {
  for (auto r : kRegions)
    if (r != Region::Unknown && to_string(r) == s) return r;
  return std::nullopt;
}

/// ASN → registry map. Entries are single ASNs or inclusive ASN ranges;
/// single entries win over ranges.
class RirMap {
 public:
  void add(Asn asn, Region r) { single_[asn] = r; }
  void add_range(Asn first, Asn last, Region r) { ranges_[first] = {last, r}; }

  Region lookup(Asn asn) const {
    if (auto it = single_.find(asn); it != single_.end()) return it->second;
    auto it = ranges_.upper_bound(asn);
    if (it == ranges_.begin()) return Region::Unknown;
    --it;
    return asn <= it->second.first ? it->second.second : Region::Unknown;
  }

  bool empty() const { return single_.empty() && ranges_.empty(); }

 private:
  std::unordered_map<Asn, Region> single_;
  std::map<Asn, std::pair<Asn, Region>> ranges_;
};

inline Region region_of(Asn asn, const RirMap& rir) { return rir.lookup(asn); }

/// Reads `asn,region` or `first-last,region` lines.
inline RirMap read_rir_map(std::istream& in) {
  RirMap map;
  detail::for_each_csv_line(in, [&](std::size_t, const std::vector<std::string_view>& f) {
    if (f.size() != 2) throw ParseError("expected 'asn,region'");
    auto region = region_from_string(f[1]);
    if (!region) throw ParseError("unknown region '" + std::string(f[1]) + "'");
    if (auto dash = f[0].find('-'); dash != std::string_view::npos) {
      auto lo = detail::parse_int<Asn>(detail::trim(f[0].substr(0, dash)), "asn");
      auto hi = detail::parse_int<Asn>(detail::trim(f[0].substr(dash + 1)), "asn");
      if (hi < lo) throw ParseError("empty asn range");
      map.add_range(lo, hi, *region);
    } else {
      map.add(detail::parse_int<Asn>(f[0], "asn"), *region);
    }
  });
  return map;
}

}  // namespace cgn

template <>
struct std::hash<cgn::Ipv4> {
  std::size_t operator()(cgn::Ipv4 a) const noexcept { return std::hash<std::uint32_t>{}(a.value); }
};

template <>
struct std::hash<cgn::Endpoint> {
  std::size_t operator()(const cgn::Endpoint& e) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{e.ip.value} << 16) | e.port);
  }
};
