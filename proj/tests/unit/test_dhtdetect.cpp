// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <queue>

#include "cgnscope/detect/dht.hpp"
#include "cgnscope/dht/population.hpp"

using namespace cgn;
using namespace cgn::detect;
using dht::PeerIdentity;
using dht::PeerRecord;

namespace {

PeerIdentity peer(const std::string& ep, std::uint8_t tag = 0) {
  dht::NodeId id;
  auto e = Endpoint::parse(ep);
  for (int i = 0; i < 4; ++i) id.bytes[i] = static_cast<std::uint8_t>(e.ip.value >> (8 * i));
  id.bytes[4] = static_cast<std::uint8_t>(e.port);
  id.bytes[5] = tag;
  return {e, id};
}

PeerRecord rec(const std::string& reporter, const std::string& reported, std::optional<Asn> asn = 64500) {
  return PeerRecord{0, peer(reporter), peer(reported), false, asn};
}

RoutingTable table_for(std::initializer_list<std::pair<const char*, Asn>> routes) {
  RoutingTable t;
  for (auto [c, a] : routes) t.add({Cidr::parse(c), a});
  return t;
}

// p public leakers each reporting q internal peers, fully connected.
std::vector<PeerRecord> biclique(int p, int q, const std::string& pub = "20.0.1.", const std::string& in = "100.64.0.") {
  std::vector<PeerRecord> out;
  for (int i = 1; i <= p; ++i)
    for (int j = 1; j <= q; ++j) out.push_back(rec(pub + std::to_string(i) + ":6881", in + std::to_string(j) + ":1000"));
  return out;
}

// Breadth-first search over the explicit bipartite graph.
std::pair<std::size_t, std::size_t> bfs_best(const LeakageGraph& g) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [p, e] : g.edges) {
    adj["P" + p.to_string()].push_back("I" + e.to_string());
    adj["I" + e.to_string()].push_back("P" + p.to_string());
  }
  std::set<std::string> done;
  std::pair<std::size_t, std::size_t> best{0, 0};
  for (const auto& [start, _] : adj) {
    if (done.count(start)) continue;
    std::set<std::string> pub;
    std::set<std::string> in;
    std::queue<std::string> q;
    q.push(start);
    done.insert(start);
    while (!q.empty()) {
      auto v = q.front();
      q.pop();
      if (v[0] == 'P') pub.insert(v);
      else in.insert(Endpoint::parse(v.substr(1)).ip.to_string());
      for (const auto& w : adj[v])
        if (done.insert(w).second) q.push(w);
    }
    std::pair<std::size_t, std::size_t> c{pub.size(), in.size()};
    if (c > best) best = c;
  }
  return best;
}

}  // namespace

TEST_CASE("five by five qualifies, four by five and five by four do not") {
  auto t = table_for({{"20.0.0.0/16", 64500}});
  auto check = [&](int p, int q) {
    auto recs = biclique(p, q);
    for (auto& r : recs) r.reporter_asn.reset();
    auto v = detect_dht(recs, t);
    REQUIRE(v.size() == 1);
    return v[0];
  };
  auto v55 = check(5, 5);
  CHECK(v55.verdict == Verdict::CgnPositive);
  CHECK(v55.pub_ips == 5);
  CHECK(v55.int_ips == 5);
  CHECK(v55.range == ReservedRange::R100X);
  CHECK(check(4, 5).verdict == Verdict::Insufficient);
  CHECK(check(5, 4).verdict == Verdict::Insufficient);
}

TEST_CASE("a path counts as one component") {
  // 1-a, 2-a, 2-b, 3-b, ... chain of 5 leakers and 5 internal peers
  std::vector<PeerRecord> recs;
  for (int i = 1; i <= 5; ++i) {
    recs.push_back(rec("20.0.1." + std::to_string(i) + ":1", "10.0.0." + std::to_string(i) + ":1"));
    if (i > 1) recs.push_back(rec("20.0.1." + std::to_string(i) + ":1", "10.0.0." + std::to_string(i - 1) + ":1"));
  }
  auto g = build_graphs(recs);
  REQUIRE(g.size() == 1);
  auto c = largest_cluster(g[0]);
  CHECK(c.public_ips == 5);
  CHECK(c.internal_ips == 5);
  CHECK(cluster_qualifies(c));
}

TEST_CASE("internal ports at one address count once") {
  std::vector<PeerRecord> recs;
  for (int i = 1; i <= 5; ++i)
    for (int port = 1; port <= 5; ++port) recs.push_back(rec("20.0.1." + std::to_string(i) + ":1", "10.0.0.1:" + std::to_string(port)));
  auto c = largest_cluster(build_graphs(recs).at(0));
  CHECK(c.public_ips == 5);
  CHECK(c.internal_ips == 1);
  CHECK_FALSE(cluster_qualifies(c));
}

TEST_CASE("leaks seen from two ASes are dropped") {
  auto recs = biclique(5, 5);
  recs.push_back(rec("30.0.0.1:1", "100.64.0.1:1000", 64501));
  auto kept = filter_exclusive(recs);
  CHECK(kept.size() == recs.size() - 6);
  for (const auto& r : kept) CHECK(r.reported.endpoint != Endpoint::parse("100.64.0.1:1000"));
  // routable reports always pass
  recs.push_back(rec("30.0.0.1:1", "20.0.1.1:6881", 64501));
  recs.push_back(rec("20.0.1.2:6881", "20.0.1.1:6881"));
  CHECK(filter_exclusive(recs).size() == kept.size() + 2);
}

TEST_CASE("ranges are clustered separately") {
  auto recs = biclique(3, 5, "20.0.1.", "100.64.0.");
  auto more = biclique(3, 5, "20.0.1.", "10.0.0.");
  recs.insert(recs.end(), more.begin(), more.end());
  auto g = build_graphs(recs);
  REQUIRE(g.size() == 2);
  auto v = classify_as(64500, g, 500);
  CHECK(v.verdict == Verdict::Negative);
  CHECK(v.observed_ranges.size() == 2);
}

TEST_CASE("reporters in reserved space or without a route are ignored") {
  std::vector<PeerRecord> recs{rec("10.1.1.1:1", "10.0.0.1:1"), rec("20.0.1.1:1", "10.0.0.1:1", std::nullopt)};
  CHECK(build_graphs(recs).empty());
}

TEST_CASE("verdict needs 200 queried peers to be negative") {
  std::vector<LeakageGraph> none;
  CHECK(classify_as(1, none, 199).verdict == Verdict::Insufficient);
  CHECK(classify_as(1, none, 200).verdict == Verdict::Negative);
  auto g = build_graphs(biclique(5, 5));
  CHECK(classify_as(64500, g, 1).verdict == Verdict::CgnPositive);
}

TEST_CASE("largest cluster tie-break") {
  // two 2x2 components of equal size: the one with the smaller first member wins
  auto a = biclique(2, 2, "20.0.2.", "10.0.0.");
  auto b = biclique(2, 2, "20.0.1.", "10.0.1.");
  a.insert(a.end(), b.begin(), b.end());
  auto c = largest_cluster(build_graphs(a).at(0));
  CHECK(c.members.front() == "10.0.0.1:1000");
  // more internal addresses beat an equal number of leakers
  auto d = biclique(2, 3, "20.0.3.", "10.0.2.");
  a.insert(a.end(), d.begin(), d.end());
  c = largest_cluster(build_graphs(a).at(0));
  CHECK(c.internal_ips == 3);
}

TEST_CASE("union-find clusters match breadth-first search on random graphs") {
  Rng rng(77);
  for (int round = 0; round < 40; ++round) {
    LeakageGraph g;
    auto edges = round < 35 ? rng.uniform(1, 400) : 10000;
    auto pubs = rng.uniform(1, edges);
    auto ins = rng.uniform(1, edges);
    for (std::uint64_t e = 0; e < edges; ++e) {
      Ipv4 p{0x14000000u + static_cast<std::uint32_t>(rng.index(pubs))};
      Endpoint i{Ipv4{0x0a000000u + static_cast<std::uint32_t>(rng.index(ins) / 2)}, static_cast<std::uint16_t>(rng.index(2))};
      g.edges.insert({p, i});
    }
    auto c = largest_cluster(g);
    auto want = bfs_best(g);
    REQUIRE(c.public_ips == want.first);
    // the BFS keeps the best by (public, internal); union-find must agree on both
    REQUIRE(c.internal_ips == want.second);
  }
}

TEST_CASE("adding leaks never removes a positive verdict") {
  Rng rng(5);
  auto t = table_for({{"20.0.0.0/16", 64500}});
  for (int round = 0; round < 200; ++round) {
    std::vector<PeerRecord> recs;
    auto n = rng.uniform(1, 60);
    for (std::uint64_t k = 0; k < n; ++k)
      recs.push_back(rec("20.0.1." + std::to_string(rng.uniform(1, 8)) + ":1", "100.64.0." + std::to_string(rng.uniform(1, 8)) + ":1"));
    bool before = detect_dht(recs, t).at(0).verdict == Verdict::CgnPositive;
    recs.push_back(rec("20.0.1." + std::to_string(rng.uniform(1, 8)) + ":1", "100.64.0." + std::to_string(rng.uniform(1, 8)) + ":1"));
    bool after = detect_dht(recs, t).at(0).verdict == Verdict::CgnPositive;
    REQUIRE((!before || after));
  }
}

TEST_CASE("synthetic population end to end") {
  using dht::AsKind;
  std::vector<dht::DhtAsSpec> specs;
  Asn asn = 65000;
  for (auto kind : {AsKind::CgnPooled, AsKind::HomeNat, AsKind::SubThreshold})
    for (auto range : {ReservedRange::R10X, ReservedRange::R100X})
      specs.push_back({asn++, kind, 8, sim::Pooling::Arbitrary, range, 200, 3});
  auto fx = dht::synth_peer_records(specs, 40, 13);
  auto verdicts = detect_dht(fx.records, fx.table);
  REQUIRE(verdicts.size() == specs.size());
  for (const auto& v : verdicts) {
    INFO("asn " << v.asn);
    CHECK((v.verdict == Verdict::CgnPositive) == fx.expect_positive.at(v.asn));
    if (!fx.expect_positive.at(v.asn)) CHECK(v.verdict == Verdict::Negative);
  }
}
