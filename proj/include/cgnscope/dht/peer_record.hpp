// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "cgnscope/addr.hpp"
#include "cgnscope/dht/krpc.hpp"

namespace cgn::dht {

/// One leakage observation: `reporter` answered a find_node and listed `reported`.
struct PeerRecord {
  double ts = 0;
  PeerIdentity reporter;
  PeerIdentity reported;
  bool responded_ping = false;
  std::optional<Asn> reporter_asn;  ///< filled in from the routing table at detection time

  friend bool operator==(const PeerRecord&, const PeerRecord&) = default;
};

/// Attaches reporter ASNs in place; reporters with no route keep nullopt.
inline void attach_asns(std::vector<PeerRecord>& records, const RoutingTable& table) {
  for (auto& r : records) r.reporter_asn = lookup_asn(r.reporter.endpoint.ip, table);
}

}  // namespace cgn::dht
