// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Leakage-graph clustering of DHT peer records, one verdict per AS.

#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/dht/peer_record.hpp"
#include "cgnscope/verdict.hpp"

namespace cgn::detect {

inline constexpr std::size_t kMinClusterPublic = 5;
inline constexpr std::size_t kMinClusterInternal = 5;
inline constexpr std::size_t kMinQueriedPeers = 200;

using dht::PeerRecord;

/// Drops every internal endpoint that reporters from more than one AS leak.
/// Records with routable reported endpoints pass through.
inline std::vector<PeerRecord> filter_exclusive(const std::vector<PeerRecord>& records) {
  std::map<Endpoint, std::set<std::optional<Asn>>> seen;
  for (const auto& r : records)
    if (is_reserved(r.reported.endpoint.ip)) seen[r.reported.endpoint].insert(r.reporter_asn);
  std::vector<PeerRecord> out;
  for (const auto& r : records)
    if (!is_reserved(r.reported.endpoint.ip) || seen[r.reported.endpoint].size() == 1) out.push_back(r);
  return out;
}

struct LeakageGraph {
  Asn asn = 0;
  ReservedRange range = ReservedRange::R192X;
  std::set<std::pair<Ipv4, Endpoint>> edges;  ///< (public leaker, internal endpoint)
};

/// One graph per (asn, range). Reporters without an ASN or sitting in
/// reserved space themselves contribute nothing.
inline std::vector<LeakageGraph> build_graphs(const std::vector<PeerRecord>& records) {
  std::map<std::pair<Asn, ReservedRange>, LeakageGraph> graphs;
  for (const auto& r : records) {
    if (!r.reporter_asn || is_reserved(r.reporter.endpoint.ip)) continue;
    auto range = classify_reserved(r.reported.endpoint.ip);
    if (!range) continue;
    auto& g = graphs[{*r.reporter_asn, *range}];
    g.asn = *r.reporter_asn;
    g.range = *range;
    g.edges.insert({r.reporter.endpoint.ip, r.reported.endpoint});
  }
  std::vector<LeakageGraph> out;
  for (auto& [_, g] : graphs) out.push_back(std::move(g));
  return out;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

struct Cluster {
  std::size_t public_ips = 0;
  std::size_t internal_ips = 0;
  /// Public leakers as "a.b.c.d", internal peers as "a.b.c.d:port", sorted.
  std::vector<std::string> members;
};

/// Component with the most distinct public IPs; ties go to more internal
/// IPs, then to the lexicographically smallest member.
inline Cluster largest_cluster(const LeakageGraph& g) {
  std::map<Ipv4, std::size_t> left;
  std::map<Endpoint, std::size_t> right;
  for (const auto& [p, e] : g.edges) {
    left.emplace(p, 0);
    right.emplace(e, 0);
  }
  std::size_t n = 0;
  for (auto& [_, i] : left) i = n++;
  for (auto& [_, i] : right) i = n++;
  UnionFind uf(n);
  for (const auto& [p, e] : g.edges) uf.unite(left[p], right[e]);

  std::map<std::size_t, std::pair<std::set<Ipv4>, std::set<Ipv4>>> ips;
  std::map<std::size_t, std::vector<std::string>> members;
  for (const auto& [p, i] : left) {
    auto root = uf.find(i);
    ips[root].first.insert(p);
    members[root].push_back(p.to_string());
  }
  for (const auto& [e, i] : right) {
    auto root = uf.find(i);
    ips[root].second.insert(e.ip);
    members[root].push_back(e.to_string());
  }

  Cluster best;
  bool have = false;
  for (auto& [root, m] : members) {
    std::sort(m.begin(), m.end());
    Cluster c{ips[root].first.size(), ips[root].second.size(), std::move(m)};
    auto better = [&] {
      if (c.public_ips != best.public_ips) return c.public_ips > best.public_ips;
      if (c.internal_ips != best.internal_ips) return c.internal_ips > best.internal_ips;
      return c.members.front() < best.members.front();
    };
    if (!have || better()) {
      best = std::move(c);
      have = true;
    }
  }
  return best;
}

inline bool cluster_qualifies(const Cluster& c) {
  return c.public_ips >= kMinClusterPublic && c.internal_ips >= kMinClusterInternal;
}

/// `graphs` may contain other ASes' graphs; only those for `asn` count.
inline AsVerdict classify_as(Asn asn, const std::vector<LeakageGraph>& graphs, std::size_t queried_peers) {
  AsVerdict v;
  v.asn = asn;
  v.method = Method::Dht;
  v.queried_peers = queried_peers;
  bool positive = false;
  std::optional<Cluster> best;
  for (const auto& g : graphs) {
    if (g.asn != asn) continue;
    auto c = largest_cluster(g);
    if (cluster_qualifies(c)) positive = true;
    v.observed_ranges.push_back(g.range);
    if (!best || c.public_ips > best->public_ips ||
        (c.public_ips == best->public_ips && c.internal_ips > best->internal_ips)) {
      best = c;
      v.range = g.range;
    }
  }
  if (best) {
    v.pub_ips = best->public_ips;
    v.int_ips = best->internal_ips;
  }
  if (positive) v.verdict = Verdict::CgnPositive;
  else if (queried_peers < kMinQueriedPeers) v.verdict = Verdict::Insufficient;
  else v.verdict = Verdict::Negative;
  return v;
}

/// Distinct responsive reporters per AS; the crawler only emits records
/// from peers that answered.
inline std::map<Asn, std::size_t> queried_peers_per_as(const std::vector<PeerRecord>& records) {
  std::map<Asn, std::set<dht::PeerIdentity>> seen;
  for (const auto& r : records)
    if (r.reporter_asn) seen[*r.reporter_asn].insert(r.reporter);
  std::map<Asn, std::size_t> out;
  for (const auto& [asn, s] : seen) out[asn] = s.size();
  return out;
}

/// Full pipeline: attach ASNs, filter, cluster, classify every AS that has a
/// responsive reporter.
inline std::vector<AsVerdict> detect_dht(std::vector<PeerRecord> records, const RoutingTable& table) {
  dht::attach_asns(records, table);
  auto queried = queried_peers_per_as(records);
  auto graphs = build_graphs(filter_exclusive(records));
  std::vector<AsVerdict> out;
  for (const auto& [asn, q] : queried) out.push_back(classify_as(asn, graphs, q));
  return out;
}

}  // namespace cgn::detect
