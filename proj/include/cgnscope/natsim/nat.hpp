// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// A single NAT device: mapping table, port/address allocation,
// inbound filtering and idle expiry.

#pragma once

#include <algorithm>
#include <bitset>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/rng.hpp"

namespace cgn::sim {

/// Virtual time.
using Seconds = double;

enum class Proto : std::uint8_t { Udp, Tcp };

/// Ordered from most restrictive to most permissive.
enum class MappingType : std::uint8_t { Symmetric, PortRestricted, AddressRestricted, FullCone };

enum class PortStrategy : std::uint8_t { Preserve, Sequential, Random, RandomChunk };

struct PortAlloc {
  PortStrategy strategy = PortStrategy::Preserve;
  std::uint32_t chunk_size = 0;  ///< only meaningful for RandomChunk

  bool operator==(const PortAlloc&) const = default;
};

enum class Pooling : std::uint8_t { Paired, Arbitrary };

enum class Hairpin : std::uint8_t { Off, Translate, PreserveSource };

inline std::string to_string(Proto p) { return p == Proto::Udp ? "udp" : "tcp"; }

inline std::string to_string(MappingType m) {
  switch (m) {
    case MappingType::Symmetric: return "symmetric";
    case MappingType::PortRestricted: return "port-restricted";
    case MappingType::AddressRestricted: return "address-restricted";
    case MappingType::FullCone: return "full-cone";
  }
  return "?";
}

inline std::string to_string(PortStrategy s) {
  switch (s) {
    case PortStrategy::Preserve: return "preserve";
    case PortStrategy::Sequential: return "sequential";
    case PortStrategy::Random: return "random";
    case PortStrategy::RandomChunk: return "random-chunk";
  }
  return "?";
}

inline std::string to_string(const PortAlloc& a) {
  if (a.strategy == PortStrategy::RandomChunk) return "random-chunk:" + std::to_string(a.chunk_size);
  return to_string(a.strategy);
}

inline std::string to_string(Pooling p) { return p == Pooling::Paired ? "paired" : "arbitrary"; }

inline std::string to_string(Hairpin h) {
  switch (h) {
    case Hairpin::Off: return "off";
    case Hairpin::Translate: return "translate";
    case Hairpin::PreserveSource: return "preserve-source";
  }
  return "?";
}

inline std::optional<MappingType> mapping_type_from_string(std::string_view s) {
  for (auto m : {MappingType::Symmetric, MappingType::PortRestricted, MappingType::AddressRestricted,
                 MappingType::FullCone})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

inline std::optional<PortAlloc> port_alloc_from_string(std::string_view s) {
  if (s.starts_with("random-chunk:")) {
    auto size = s.substr(13);
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(size.data(), size.data() + size.size(), v);
    if (ec != std::errc{} || p != size.data() + size.size()) return std::nullopt;
    return PortAlloc{PortStrategy::RandomChunk, v};
  }
  for (auto st : {PortStrategy::Preserve, PortStrategy::Sequential, PortStrategy::Random})
    if (to_string(st) == s) return PortAlloc{st, 0};
  return std::nullopt;
}

inline std::optional<Pooling> pooling_from_string(std::string_view s) {
  if (s == "paired") return Pooling::Paired;
  if (s == "arbitrary") return Pooling::Arbitrary;
  return std::nullopt;
}

inline std::optional<Hairpin> hairpin_from_string(std::string_view s) {
  for (auto h : {Hairpin::Off, Hairpin::Translate, Hairpin::PreserveSource})
    if (to_string(h) == s) return h;
  return std::nullopt;
}

struct NatConfig {
  MappingType mapping = MappingType::FullCone;
  PortAlloc port_alloc;
  Pooling pooling = Pooling::Paired;
  std::vector<Ipv4> external_pool;
  Seconds udp_timeout = 120;
  Seconds tcp_timeout = 7200;
  Hairpin hairpin = Hairpin::Off;
  Cidr internal_range{Ipv4{192, 168, 0, 0}, 16};

  Seconds timeout(Proto p) const { return p == Proto::Udp ? udp_timeout : tcp_timeout; }

  void validate() const {
    if (external_pool.empty()) throw InputError("NAT external pool is empty");
    if (!(udp_timeout > 0) || !(tcp_timeout > 0)) throw InputError("NAT timeouts must be positive");
    if (port_alloc.strategy == PortStrategy::RandomChunk) {
      auto c = port_alloc.chunk_size;
      if (c < 64 || c > 16384 || (c & (c - 1)) != 0)
        throw InputError("chunk size must be a power of two in [64, 16384], got " + std::to_string(c));
    }
    std::set<Ipv4> uniq(external_pool.begin(), external_pool.end());
    if (uniq.size() != external_pool.size()) throw InputError("duplicate address in NAT external pool");
  }
};

/// One live translation.
struct MappingEntry {
  Proto proto = Proto::Udp;
  Endpoint int_ep;
  Endpoint ext_ep;
  std::optional<Endpoint> dst_key;  ///< set iff the NAT is Symmetric
  Seconds created = 0;
  Seconds last_active = 0;
  std::set<Endpoint> contacted;  ///< remotes this mapping sent to; drives filtering

  /// Whether a packet from `remote` may use this mapping inbound.
  bool admits(MappingType type, const Endpoint& remote) const {
    switch (type) {
      case MappingType::FullCone: return true;
      case MappingType::AddressRestricted:
        return std::any_of(contacted.begin(), contacted.end(), [&](const Endpoint& c) { return c.ip == remote.ip; });
      case MappingType::PortRestricted: return contacted.contains(remote);
      case MappingType::Symmetric: return dst_key && *dst_key == remote;
    }
    return false;
  }
};

enum class InboundStatus : std::uint8_t { Accepted, NoMapping, Filtered };

struct InboundResult {
  InboundStatus status = InboundStatus::NoMapping;
  const MappingEntry* entry = nullptr;
};

/// Stable assignment of an internal address onto a pool, independent of any seed.
inline std::size_t paired_pool_index(Ipv4 internal, std::size_t pool_size) {
  return static_cast<std::size_t>(Rng::mix(internal.value, 0x5ca1ab1eULL) % pool_size);
}

class NatDevice {
 public:
  static constexpr std::uint16_t kFirstDynamicPort = 1024;

  NatDevice(NatConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    pool_set_.insert(cfg_.external_pool.begin(), cfg_.external_pool.end());
    if (cfg_.port_alloc.strategy == PortStrategy::RandomChunk) {
      auto c = cfg_.port_alloc.chunk_size;
      chunk_first_base_ = (kFirstDynamicPort + c - 1) / c * c;
      chunk_slots_ = (65536u - chunk_first_base_) / c;
    }
  }

  const NatConfig& config() const { return cfg_; }
  bool owns(Ipv4 ip) const { return pool_set_.contains(ip); }
  std::size_t size() const { return entries_.size(); }

  /// Creates a mapping for a new flow and returns its external endpoint.
  /// Throws InputError if `int_ep` is outside the internal range or already
  /// mapped for this key, AllocationFailure when no port is free.
  Endpoint allocate_mapping(Proto proto, const Endpoint& int_ep, const Endpoint& dst_ep, Seconds now) {
    if (!cfg_.internal_range.contains(int_ep.ip))
      throw InputError(int_ep.to_string() + " is outside internal range " + cfg_.internal_range.to_string());
    auto key = int_key(proto, int_ep, dst_ep);
    if (by_int_.contains(key)) throw InputError("mapping already exists for " + int_ep.to_string());

    Ipv4 ext_ip = choose_external_ip(int_ep.ip);
    std::uint16_t port = choose_port(proto, int_ep, ext_ip);

    MappingEntry e;
    e.proto = proto;
    e.int_ep = int_ep;
    e.ext_ep = Endpoint{ext_ip, port};
    if (cfg_.mapping == MappingType::Symmetric) e.dst_key = dst_ep;
    e.created = now;
    e.last_active = now;

    auto id = next_id_++;
    ports_for(proto, ext_ip).set(port);
    by_ext_[{proto, e.ext_ep}] = id;
    by_int_[key] = id;
    ++subscriber_live_[int_ep.ip];
    next_check_ = std::min(next_check_, now + cfg_.timeout(proto));
    entries_.emplace(id, std::move(e));
    return Endpoint{ext_ip, port};
  }

  /// Outbound translation: reuses or creates the flow's mapping, records the
  /// contacted remote and refreshes it.
  const MappingEntry& outbound(Proto proto, const Endpoint& src, const Endpoint& dst, Seconds now) {
    auto key = int_key(proto, src, dst);
    auto it = by_int_.find(key);
    if (it == by_int_.end()) {
      allocate_mapping(proto, src, dst, now);
      it = by_int_.find(key);
    }
    auto& e = entries_.at(it->second);
    e.contacted.insert(dst);
    e.last_active = now;
    return e;
  }

  /// Inbound translation of a packet addressed to `ext_dst` from `remote`.
  /// Accepted packets refresh the mapping.
  InboundResult inbound(Proto proto, const Endpoint& ext_dst, const Endpoint& remote, Seconds now) {
    auto it = by_ext_.find({proto, ext_dst});
    if (it == by_ext_.end()) return {InboundStatus::NoMapping, nullptr};
    auto& e = entries_.at(it->second);
    if (!e.admits(cfg_.mapping, remote)) return {InboundStatus::Filtered, &e};
    e.last_active = now;
    return {InboundStatus::Accepted, &e};
  }

  const MappingEntry* find_by_ext(Proto proto, const Endpoint& ext) const {
    auto it = by_ext_.find({proto, ext});
    return it == by_ext_.end() ? nullptr : &entries_.at(it->second);
  }

  const MappingEntry* find_by_int(Proto proto, const Endpoint& int_ep, const Endpoint& dst) const {
    auto it = by_int_.find(int_key(proto, int_ep, dst));
    return it == by_int_.end() ? nullptr : &entries_.at(it->second);
  }

  /// Removes every mapping idle for strictly longer than its timeout.
  std::size_t expire(Seconds now) {
    if (now <= next_check_) return 0;
    std::size_t removed = 0;
    Seconds next = std::numeric_limits<Seconds>::infinity();
    for (auto it = entries_.begin(); it != entries_.end();) {
      const auto& e = it->second;
      auto deadline = e.last_active + cfg_.timeout(e.proto);
      if (now > deadline) {
        erase_indexes(e);
        it = entries_.erase(it);
        ++removed;
      } else {
        next = std::min(next, deadline);
        ++it;
      }
    }
    next_check_ = next;
    return removed;
  }

  /// Live mappings in creation order.
  std::vector<MappingEntry> mappings() const {
    std::vector<MappingEntry> out;
    out.reserve(entries_.size());
    for (const auto& [_, e] : entries_) out.push_back(e);
    return out;
  }

  /// Port block currently held by `subscriber` (RandomChunk only).
  std::optional<std::uint32_t> chunk_base(Ipv4 subscriber) const {
    auto it = subscriber_slot_.find(subscriber);
    if (it == subscriber_slot_.end()) return std::nullopt;
    return chunk_first_base_ + it->second * cfg_.port_alloc.chunk_size;
  }

 private:
  using IntKey = std::tuple<Proto, Endpoint, std::optional<Endpoint>>;
  using ExtKey = std::pair<Proto, Endpoint>;
  using PortSet = std::bitset<65536>;

  IntKey int_key(Proto proto, const Endpoint& src, const Endpoint& dst) const {
    if (cfg_.mapping == MappingType::Symmetric) return {proto, src, dst};
    return {proto, src, std::nullopt};
  }

  PortSet& ports_for(Proto proto, Ipv4 ip) {
    auto& slot = used_ports_[{proto, ip}];
    if (!slot) slot = std::make_unique<PortSet>();
    return *slot;
  }

  Ipv4 choose_external_ip(Ipv4 internal) {
    const auto& pool = cfg_.external_pool;
    if (cfg_.pooling == Pooling::Paired) return pool[paired_pool_index(internal, pool.size())];
    return pool[rng_.index(pool.size())];
  }

  std::uint16_t choose_port(Proto proto, const Endpoint& int_ep, Ipv4 ext_ip) {
    auto& used = ports_for(proto, ext_ip);
    switch (cfg_.port_alloc.strategy) {
      case PortStrategy::Preserve: {
        for (std::uint32_t p = int_ep.port; p <= 65535; ++p)
          if (p != 0 && !used.test(p)) return static_cast<std::uint16_t>(p);
        throw AllocationFailure("no free port at or above " + std::to_string(int_ep.port) + " on " +
                                ext_ip.to_string());
      }
      case PortStrategy::Sequential: {
        auto& cursor = seq_cursor_[proto];
        for (std::uint32_t i = 0; i < 65536u - kFirstDynamicPort; ++i) {
          std::uint32_t p = kFirstDynamicPort + (cursor - kFirstDynamicPort + i) % (65536u - kFirstDynamicPort);
          if (!used.test(p)) {
            cursor = p + 1 > 65535 ? kFirstDynamicPort : p + 1;
            return static_cast<std::uint16_t>(p);
          }
        }
        throw AllocationFailure("sequential port space exhausted on " + ext_ip.to_string());
      }
      case PortStrategy::Random:
        return random_port(used, kFirstDynamicPort, 65535, ext_ip);
      case PortStrategy::RandomChunk: {
        auto base = acquire_chunk(int_ep.ip, ext_ip);
        return random_port(used, base, base + cfg_.port_alloc.chunk_size - 1, ext_ip);
      }
    }
    throw AllocationFailure("unknown port strategy");
  }

  std::uint16_t random_port(const PortSet& used, std::uint32_t lo, std::uint32_t hi, Ipv4 ext_ip) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto p = static_cast<std::uint32_t>(rng_.uniform(lo, hi));
      if (!used.test(p)) return static_cast<std::uint16_t>(p);
    }
    auto span = hi - lo + 1;
    auto start = static_cast<std::uint32_t>(rng_.uniform(0, span - 1));
    for (std::uint32_t i = 0; i < span; ++i) {
      auto p = lo + (start + i) % span;
      if (!used.test(p)) return static_cast<std::uint16_t>(p);
    }
    throw AllocationFailure("ports " + std::to_string(lo) + "-" + std::to_string(hi) + " exhausted on " +
                            ext_ip.to_string());
  }

  /// Returns the base port of the subscriber's block, assigning the lowest
  /// free block on first use. Under arbitrary pooling a block must be free
  /// on every pool address so the subscriber keeps one block everywhere.
  std::uint32_t acquire_chunk(Ipv4 subscriber, Ipv4 ext_ip) {
    const auto chunk = cfg_.port_alloc.chunk_size;
    auto it = subscriber_slot_.find(subscriber);
    if (it == subscriber_slot_.end()) {
      std::optional<std::uint32_t> slot;
      for (std::uint32_t s = 0; s < chunk_slots_ && !slot; ++s) {
        bool free = true;
        if (cfg_.pooling == Pooling::Paired) {
          free = !slot_owner_[ext_ip].contains(s);
        } else {
          for (auto ip : cfg_.external_pool) free = free && !slot_owner_[ip].contains(s);
        }
        if (free) slot = s;
      }
      if (!slot) throw AllocationFailure("no free port chunk on " + ext_ip.to_string());
      it = subscriber_slot_.emplace(subscriber, *slot).first;
    }
    auto& owner = slot_owner_[ext_ip];
    auto o = owner.find(it->second);
    if (o == owner.end()) {
      owner.emplace(it->second, subscriber);
    } else if (o->second != subscriber) {
      throw AllocationFailure("port chunk conflict on " + ext_ip.to_string());
    }
    return chunk_first_base_ + it->second * chunk;
  }

  void erase_indexes(const MappingEntry& e) {
    by_ext_.erase({e.proto, e.ext_ep});
    by_int_.erase(int_key(e.proto, e.int_ep, e.dst_key.value_or(Endpoint{})));
    ports_for(e.proto, e.ext_ep.ip).reset(e.ext_ep.port);
    auto live = subscriber_live_.find(e.int_ep.ip);
    if (live != subscriber_live_.end() && --live->second == 0) {
      subscriber_live_.erase(live);
      release_chunk(e.int_ep.ip);
    }
  }

  void release_chunk(Ipv4 subscriber) {
    auto it = subscriber_slot_.find(subscriber);
    if (it == subscriber_slot_.end()) return;
    for (auto& [ip, owners] : slot_owner_) {
      auto o = owners.find(it->second);
      if (o != owners.end() && o->second == subscriber) owners.erase(o);
    }
    subscriber_slot_.erase(it);
  }

  NatConfig cfg_;
  Rng rng_;
  std::set<Ipv4> pool_set_;
  std::map<std::uint64_t, MappingEntry> entries_;
  std::map<ExtKey, std::uint64_t> by_ext_;
  std::map<IntKey, std::uint64_t> by_int_;
  std::map<std::pair<Proto, Ipv4>, std::unique_ptr<PortSet>> used_ports_;
  std::map<Proto, std::uint32_t> seq_cursor_{{Proto::Udp, kFirstDynamicPort}, {Proto::Tcp, kFirstDynamicPort}};
  std::map<Ipv4, std::size_t> subscriber_live_;
  std::map<Ipv4, std::uint32_t> subscriber_slot_;
  std::map<Ipv4, std::map<std::uint32_t, Ipv4>> slot_owner_;
  std::uint32_t chunk_first_base_ = 0;
  std::uint32_t chunk_slots_ = 0;
  std::uint64_t next_id_ = 0;
  Seconds next_check_ = std::numeric_limits<Seconds>::infinity();
};

}  // namespace cgn::sim
