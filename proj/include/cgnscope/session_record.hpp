// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// One client measurement session and the probe results it carries.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cgnscope/addr.hpp"

namespace cgn {

enum class Access : std::uint8_t { Cellular, NonCellular };

inline std::string to_string(Access a) { return a == Access::Cellular ? "cellular" : "noncellular"; }

/// One echo exchange: the port the client bound and what the server saw.
struct FlowObservation {
  std::uint16_t local_port = 0;
  Ipv4 observed_ip;
  std::uint16_t observed_port = 0;
  int index = 0;
  friend bool operator==(const FlowObservation&, const FlowObservation&) = default;
};

/// Ordered from most restrictive to most permissive; Open means no NAT.
enum class StunMapping : std::uint8_t { Symmetric, PortRestricted, AddressRestricted, FullCone, Open };

inline std::string to_string(StunMapping m) {
  switch (m) {
    case StunMapping::Symmetric: return "symmetric";
    case StunMapping::PortRestricted: return "port-restricted";
    case StunMapping::AddressRestricted: return "address-restricted";
    case StunMapping::FullCone: return "full-cone";
    case StunMapping::Open: return "open";
  }
  return "?";
}

inline std::optional<StunMapping> stun_mapping_from_string(std::string_view s) {
  for (auto m : {StunMapping::Symmetric, StunMapping::PortRestricted, StunMapping::AddressRestricted,
                 StunMapping::FullCone, StunMapping::Open})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct StunOutcome {
  StunMapping mapping = StunMapping::Open;
  Endpoint mapped;  ///< from test I
  bool test1 = false;                 ///< reply to the plain binding request
  std::optional<bool> test2;          ///< reply with change IP and port
  std::optional<bool> same_mapping;   ///< test I towards the alternate address saw the same mapping
  std::optional<bool> test3;          ///< reply with change port
  friend bool operator==(const StunOutcome&, const StunOutcome&) = default;
};

struct DetectedNat {
  int hop = 0;
  double timeout_low = 0;   ///< mapping survived this idle time
  double timeout_high = 0;  ///< mapping was gone at this idle time
  double estimate() const { return (timeout_low + timeout_high) / 2; }
  friend bool operator==(const DetectedNat&, const DetectedNat&) = default;
};

struct TtlResult {
  std::vector<DetectedNat> nats;
  int path_hops = 0;
  int experiments = 0;
  bool address_mismatch = false;
  bool stateful_no_nat = false;
  bool unstable_path = false;
  friend bool operator==(const TtlResult&, const TtlResult&) = default;
};

struct SessionRecord {
  std::string session_id;
  Asn asn = 0;
  Access access = Access::NonCellular;
  Ipv4 ip_dev;
  std::optional<Ipv4> ip_cpe;
  Ipv4 ip_pub;
  std::vector<FlowObservation> flows;
  std::optional<StunOutcome> stun;
  std::optional<TtlResult> ttl_result;
  double ts = 0;
  bool exclude = false;  ///< VPN / femtocell sessions pruned at ingest
  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

}  // namespace cgn
