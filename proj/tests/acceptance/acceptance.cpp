// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any of them failed.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cgnscope/detect/dht.hpp"
#include "cgnscope/detect/session.hpp"
#include "cgnscope/dht/bencode.hpp"
#include "cgnscope/dht/krpc.hpp"
#include "cgnscope/dht/population.hpp"
#include "cgnscope/natsim/topology.hpp"
#include "cgnscope/probe/scenario.hpp"
#include "cgnscope/report/aggregate.hpp"

using namespace cgn;
using namespace std::string_literals;
using namespace std::string_view_literals;

namespace {

struct Result {
  bool pass = true;
  std::string detail;
};

std::string fixed1(double x, int digits = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

double wall_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr sim::MappingType kMappings[] = {sim::MappingType::FullCone, sim::MappingType::AddressRestricted,
                                          sim::MappingType::PortRestricted, sim::MappingType::Symmetric};
constexpr sim::PortStrategy kStrategies[] = {sim::PortStrategy::Preserve, sim::PortStrategy::Sequential,
                                             sim::PortStrategy::Random, sim::PortStrategy::RandomChunk};
constexpr sim::Pooling kPoolings[] = {sim::Pooling::Paired, sim::Pooling::Arbitrary};

StunMapping stun_name(sim::MappingType m) {
  switch (m) {
    case sim::MappingType::FullCone: return StunMapping::FullCone;
    case sim::MappingType::AddressRestricted: return StunMapping::AddressRestricted;
    case sim::MappingType::PortRestricted: return StunMapping::PortRestricted;
    case sim::MappingType::Symmetric: return StunMapping::Symmetric;
  }
  return StunMapping::Open;
}

probe::PortClass port_class(sim::PortStrategy s) {
  switch (s) {
    case sim::PortStrategy::Preserve: return probe::PortClass::Preserved;
    case sim::PortStrategy::Sequential: return probe::PortClass::Sequential;
    default: return probe::PortClass::Random;
  }
}

// ---------------------------------------------------------------------------
// NAT behaviour recovery

struct Recovered {
  std::optional<StunMapping> mapping;
  std::optional<probe::PortClass> cls;
  std::optional<std::uint32_t> chunk;
  std::optional<sim::Pooling> pooling;
  double virtual_time = 0;
};

Recovered probe_cgn(sim::NatConfig cfg, std::size_t pool, std::size_t subscribers, bool stun, std::uint64_t seed) {
  cfg.external_pool.clear();
  for (std::uint32_t i = 1; i <= pool; ++i) cfg.external_pool.push_back(Ipv4{Ipv4::parse("20.0.255.0").value + i});
  probe::ChainSpec spec;
  spec.cgn = cfg;
  spec.subscribers = subscribers;
  auto net = probe::build_chain(spec, seed);

  Recovered out;
  std::vector<std::vector<FlowObservation>> traces;
  for (std::size_t i = 0; i < net.clients.size(); ++i) {
    probe::SimDriver d(net.topo, net.clients[i], net.server, Rng::mix(seed, i));
    if (i == 0 && stun) out.mapping = probe::stun_classify(d, seed).mapping;
    traces.push_back(probe::collect_port_trace(d));
    out.virtual_time = d.now();
  }
  std::map<probe::PortClass, std::size_t> votes;
  for (const auto& t : traces)
    if (t.size() >= probe::kTraceLength) ++votes[probe::infer_port_allocation(t)];
  std::size_t best = 0;
  for (auto [c, n] : votes)
    if (n > best) best = n, out.cls = c;
  out.chunk = probe::detect_chunks(traces);
  out.pooling = probe::infer_pooling(traces);
  return out;
}

Result behaviour_recovery() {
  auto t0 = std::chrono::steady_clock::now();
  constexpr std::uint32_t kMatrixChunk = 1024;
  double virtual_total = 0;
  std::size_t good = 0, configs = 0;
  std::vector<std::string> misses;
  std::uint64_t seed = 100;
  for (auto m : kMappings)
    for (auto s : kStrategies)
      for (auto p : kPoolings) {
        ++configs;
        auto cfg = probe::carrier_nat_config();
        cfg.mapping = m;
        cfg.port_alloc = {s, s == sim::PortStrategy::RandomChunk ? kMatrixChunk : 0};
        cfg.pooling = p;
        bool random = s == sim::PortStrategy::Random || s == sim::PortStrategy::RandomChunk;
        std::string name = sim::to_string(m) + "/" + sim::to_string(cfg.port_alloc) + "/" + sim::to_string(p);
        try {
          auto r = probe_cgn(cfg, 8, random ? probe::kMinChunkSessions : probe::kMinPoolingSessions, true, ++seed);
          virtual_total += r.virtual_time;
          std::optional<std::uint32_t> want_chunk;
          if (s == sim::PortStrategy::RandomChunk) want_chunk = kMatrixChunk;
          bool ok = r.mapping == stun_name(m) && r.cls == port_class(s) && r.chunk == want_chunk && r.pooling == p;
          if (ok) ++good;
          else misses.push_back(name);
        } catch (const std::exception& e) {
          misses.push_back(name + " (" + e.what() + ")");
        }
      }

  std::size_t chunks_ok = 0;
  const std::uint32_t sizes[] = {512, 1024, 4096, 16384};
  for (auto c : sizes) {
    auto cfg = probe::carrier_nat_config();
    cfg.port_alloc = {sim::PortStrategy::RandomChunk, c};
    try {
      auto r = probe_cgn(cfg, 32, probe::kMinChunkSessions, false, 900 + c);
      virtual_total += r.virtual_time;
      if (r.chunk == c) ++chunks_ok;
      else misses.push_back("chunk " + std::to_string(c) + " read as " + (r.chunk ? std::to_string(*r.chunk) : "none"));
    } catch (const std::exception& e) {
      misses.push_back("chunk " + std::to_string(c) + " (" + e.what() + ")");
    }
  }

  Result res;
  res.pass = good == configs && chunks_ok == std::size(sizes) && virtual_total < 60;
  res.detail = std::to_string(good) + "/" + std::to_string(configs) + " configs, chunk sizes " +
               std::to_string(chunks_ok) + "/" + std::to_string(std::size(sizes)) + ", virtual " +
               fixed1(virtual_total) + " s, wall " + fixed1(wall_since(t0), 2) + " s";
  for (std::size_t i = 0; i < misses.size() && i < 4; ++i) res.detail += (i ? "; " : "; missed ") + misses[i];
  return res;
}

// ---------------------------------------------------------------------------
// TTL-driven hop and timeout enumeration

Result ttl_enumeration() {
  Rng rng(4242);
  std::size_t good = 0, beyond_good = 0;
  constexpr std::size_t kCases = 100, kBeyond = 20;
  std::vector<std::string> misses;
  auto run = [&](int hop, double timeout, std::uint64_t seed) {
    auto cfg = probe::carrier_nat_config();
    cfg.udp_timeout = timeout;
    probe::ChainSpec chain;
    chain.cgn = cfg;
    bool cpe = hop >= 2 && rng.chance(0.5);
    if (cpe) chain.cpe = probe::home_cpe_config();
    chain.routers_before = static_cast<std::size_t>(hop - 1 - (cpe ? 1 : 0));
    chain.routers_after = static_cast<std::size_t>(rng.uniform(0, 3));
    auto net = probe::build_chain(chain, seed);
    if (net.cgn_hop != hop) throw std::logic_error("chain built with the CGN at the wrong hop");
    probe::SimDriver d(net.topo, net.clients[0], net.server, seed);
    return probe::ttl_enumerate(d);
  };

  for (std::size_t c = 0; c < kCases; ++c) {
    int hop = static_cast<int>(rng.uniform(2, 12));
    // both ends of the timeout range are always in the sample
    double timeout = c == 0 ? 10.0 : c == 1 ? 200.0 : static_cast<double>(rng.uniform(10, 200));
    auto r = run(hop, timeout, 7000 + c);
    bool ok = r.nats.size() == 1 && r.nats[0].hop == hop && r.nats[0].timeout_low <= timeout &&
              timeout < r.nats[0].timeout_high && r.nats[0].timeout_high - r.nats[0].timeout_low <= 10;
    if (ok) ++good;
    else misses.push_back("hop " + std::to_string(hop) + " timeout " + fixed1(timeout));
  }
  for (std::size_t c = 0; c < kBeyond; ++c) {
    int hop = static_cast<int>(rng.uniform(2, 12));
    auto timeout = static_cast<double>(rng.uniform(201, 1000));
    auto r = run(hop, timeout, 8000 + c);
    if (r.nats.empty() && r.address_mismatch) ++beyond_good;
    else misses.push_back("hop " + std::to_string(hop) + " timeout " + fixed1(timeout) + " beyond grid");
  }

  Result res;
  res.pass = good == kCases && beyond_good == kBeyond;
  res.detail = std::to_string(good) + "/" + std::to_string(kCases) + " chains located with the timeout inside its interval, " +
               std::to_string(beyond_good) + "/" + std::to_string(kBeyond) + " longer timeouts flagged by address mismatch only";
  for (std::size_t i = 0; i < misses.size() && i < 4; ++i) res.detail += (i ? "; " : "; missed ") + misses[i];
  return res;
}

// ---------------------------------------------------------------------------
// DHT leakage detection

Result dht_detection() {
  using dht::AsKind;
  std::vector<dht::DhtAsSpec> specs;
  const AsKind kinds[] = {AsKind::CgnPooled, AsKind::HomeNat, AsKind::SubThreshold};
  for (std::size_t k = 0; k < 50; ++k) {
    dht::DhtAsSpec s;
    s.asn = static_cast<Asn>(65000 + k);
    s.kind = kinds[k % 3];
    s.internal = kReservedRanges[k % 4];
    s.pooling = k % 2 ? sim::Pooling::Arbitrary : sim::Pooling::Paired;
    s.pool_size = s.kind == AsKind::SubThreshold ? 2 + k % 3 : 8 + k % 5;
    s.public_peers = 200;
    specs.push_back(s);
  }
  auto fx = dht::synth_peer_records(specs, 24, 31337);
  auto verdicts = detect::detect_dht(fx.records, fx.table);

  std::size_t tp = 0, fp = 0, fn = 0, thin = 0;
  for (const auto& v : verdicts) {
    bool truth = fx.expect_positive.at(v.asn);
    bool said = v.verdict == Verdict::CgnPositive;
    tp += truth && said;
    fp += !truth && said;
    fn += truth && !said;
    thin += v.queried_peers < detect::kMinQueriedPeers || v.verdict == Verdict::Insufficient;
  }
  double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0;
  double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0;

  // p x q bicliques inside an AS that otherwise has enough responsive peers
  RoutingTable table;
  table.add({Cidr::parse("20.0.0.0/16"), 64500});
  auto biclique = [&](int p, int q) {
    std::vector<dht::PeerRecord> recs;
    auto id = [](Endpoint e, std::uint8_t tag) {
      dht::NodeId n;
      for (int i = 0; i < 4; ++i) n.bytes[i] = static_cast<std::uint8_t>(e.ip.value >> (8 * i));
      n.bytes[4] = tag;
      return dht::PeerIdentity{e, n};
    };
    for (int i = 1; i <= p; ++i)
      for (int j = 1; j <= q; ++j)
        recs.push_back({0, id(Endpoint::parse("20.0.1." + std::to_string(i) + ":6881"), 1),
                        id(Endpoint::parse("100.64.0." + std::to_string(j) + ":7000"), 2), false, std::nullopt});
    for (int i = 0; i < 200; ++i)
      recs.push_back({0, id(Endpoint{Ipv4{Ipv4::parse("20.0.2.0").value + static_cast<std::uint32_t>(i + 1)}, 6881}, 3),
                      id(Endpoint::parse("20.0.9.9:6881"), 4), false, std::nullopt});
    return detect::detect_dht(recs, table).at(0).verdict;
  };
  auto v55 = biclique(5, 5), v45 = biclique(4, 5), v54 = biclique(5, 4);
  bool boundaries = v55 == Verdict::CgnPositive && v45 == Verdict::Negative && v54 == Verdict::Negative;

  Result res;
  res.pass = verdicts.size() == specs.size() && thin == 0 && precision == 1.0 && recall == 1.0 && boundaries;
  res.detail = std::to_string(verdicts.size()) + " ASes, precision " + fixed1(precision * 100) + "%, recall " +
               fixed1(recall * 100) + "%, " + std::to_string(thin) + " under-sampled; 5x5 " + to_string(v55) +
               ", 4x5 " + to_string(v45) + ", 5x4 " + to_string(v54);
  return res;
}

// ---------------------------------------------------------------------------
// Session heuristics

Result session_detection() {
  std::vector<std::string> problems;
  if (detect::kCellularMinSessions != 5) problems.push_back("cellular minimum");
  if (detect::kNonCellularMinSessions != 10) problems.push_back("non-cellular minimum");
  if (detect::kTopCpeBlocks != 10) problems.push_back("top CPE blocks");
  if (detect::kDiversityNum * 10 != detect::kDiversityDen * 4) problems.push_back("diversity ratio");

  RoutingTable t;
  t.add({Cidr::parse("20.0.0.0/16"), 64500});
  auto home = [](std::size_t i, const std::string& cpe) {
    SessionRecord s;
    s.session_id = "h" + std::to_string(i);
    s.asn = 64500;
    s.access = Access::NonCellular;
    s.ip_dev = Ipv4::parse("192.168.1.10");
    s.ip_cpe = Ipv4::parse(cpe);
    s.ip_pub = Ipv4::parse("20.0.0.9");
    return s;
  };
  // ten candidates over four /24s is exactly 0.4 N; three /24s falls short
  auto diverse = [&](std::size_t blocks) {
    std::vector<SessionRecord> v;
    for (std::size_t i = 0; i < 10; ++i) v.push_back(home(i, "100.64." + std::to_string(i % blocks) + "." + std::to_string(i + 2)));
    return detect::classify_noncellular(v, detect::CpeBlocks{}, t).verdict;
  };
  if (diverse(4) != Verdict::CgnPositive) problems.push_back("four /24s of ten");
  if (diverse(3) != Verdict::Negative) problems.push_back("three /24s of ten");
  std::vector<SessionRecord> cell;
  for (std::size_t i = 0; i < 5; ++i) {
    SessionRecord s;
    s.session_id = "c" + std::to_string(i);
    s.asn = 64500;
    s.access = Access::Cellular;
    s.ip_dev = Ipv4::parse("10.1.2.3");
    s.ip_pub = Ipv4::parse("20.0.0.9");
    cell.push_back(s);
  }
  if (detect::classify_cellular(cell, t).verdict != Verdict::CgnPositive) problems.push_back("five cellular sessions");
  cell.pop_back();
  if (detect::classify_cellular(cell, t).verdict != Verdict::Insufficient) problems.push_back("four cellular sessions");
  std::vector<SessionRecord> many;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t k = 0; k <= i; ++k) {
      many.push_back(home(many.size(), "100.64.0.1"));
      many.back().ip_dev = Ipv4::parse("192.168." + std::to_string(i) + ".10");
    }
  if (detect::compute_cpe_top_blocks(many).blocks.size() != 10) problems.push_back("top ten blocks");

  std::size_t fixtures_ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    probe::SessionFixtureSpec spec;
    spec.asn = static_cast<Asn>(64600 + seed);
    // NAT444 (CPE behind a carrier NAT) against home NATs on public space
    spec.access = Access::NonCellular;
    spec.carrier_nat = seed % 2 == 0;
    spec.sessions = 40;
    spec.public_prefix = dht::fixture_prefix(seed);
    RoutingTable rt;
    rt.add({spec.public_prefix, spec.asn});
    auto v = detect::detect_sessions(probe::synth_sessions(spec, seed), rt);
    auto want = spec.carrier_nat ? Verdict::CgnPositive : Verdict::Negative;
    if (v.size() == 1 && v[0].verdict == want) ++fixtures_ok;
    else problems.push_back("fixture seed " + std::to_string(seed));
  }

  Result res;
  res.pass = problems.empty();
  res.detail = "constants and thresholds checked, " + std::to_string(fixtures_ok) + "/20 simulated NAT444 and home-only fixtures";
  for (std::size_t i = 0; i < problems.size() && i < 4; ++i) res.detail += (i ? "; " : "; wrong: ") + problems[i];
  return res;
}

// ---------------------------------------------------------------------------
// Wire codecs

std::string ref_bencode(const dht::Value& v) {
  std::string out;
  if (v.is_int()) return "i" + std::to_string(v.as_int()) + "e";
  if (v.is_string()) return std::to_string(v.as_string().size()) + ":" + v.as_string();
  if (v.is_list()) {
    out = "l";
    for (const auto& x : v.as_list()) out += ref_bencode(x);
    return out + "e";
  }
  std::vector<std::string> keys;
  for (const auto& [k, _] : v.as_dict()) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](char x, char y) {
      return static_cast<unsigned char>(x) < static_cast<unsigned char>(y);
    });
  });
  out = "d";
  for (const auto& k : keys) out += std::to_string(k.size()) + ":" + k + ref_bencode(*v.find(k));
  return out + "e";
}

std::string random_bytes(Rng& rng, std::size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng.index(256));
  return s;
}

dht::Value random_value(Rng& rng, int depth) {
  switch (depth >= 3 ? rng.index(2) : rng.index(4)) {
    case 0: {
      auto r = static_cast<std::int64_t>(rng.next());
      return rng.chance(0.1) ? dht::Value(rng.chance(0.5) ? INT64_MIN : INT64_MAX) : dht::Value(r >> rng.index(64));
    }
    case 1: return random_bytes(rng, rng.index(40));
    case 2: {
      dht::List l;
      for (auto n = rng.index(5); n > 0; --n) l.push_back(random_value(rng, depth + 1));
      return l;
    }
    default: {
      dht::Dict d;
      for (auto n = rng.index(5); n > 0; --n) d[random_bytes(rng, rng.index(8))] = random_value(rng, depth + 1);
      return d;
    }
  }
}

Result wire_codecs() {
  Rng rng(5150);
  std::size_t bencode_ok = 0, compact_ok = 0;
  constexpr std::size_t kValues = 10000;
  for (std::size_t i = 0; i < kValues; ++i) {
    auto v = random_value(rng, 0);
    auto bytes = dht::encode(v);
    if (bytes == ref_bencode(v) && dht::decode(bytes) == v) ++bencode_ok;
  }
  // the 26-byte layout: id, address and port in network byte order
  std::size_t bytes_checked = 0;
  for (std::size_t i = 0; i < kValues; ++i) {
    dht::CompactNodeInfo n{dht::NodeId::random(rng), Endpoint{Ipv4{static_cast<std::uint32_t>(rng.next())},
                                                              static_cast<std::uint16_t>(rng.uniform(0, 65535))}};
    auto blob = dht::encode_compact_list({n});
    bool ok = blob.size() == 26;
    for (std::size_t k = 0; ok && k < 20; ++k) ok = static_cast<std::uint8_t>(blob[k]) == n.id.bytes[k];
    for (std::size_t k = 0; ok && k < 4; ++k)
      ok = static_cast<std::uint8_t>(blob[20 + k]) == ((n.endpoint.ip.value >> (24 - 8 * k)) & 0xff);
    ok = ok && static_cast<std::uint8_t>(blob[24]) == n.endpoint.port >> 8 &&
         static_cast<std::uint8_t>(blob[25]) == (n.endpoint.port & 0xff);
    auto back = dht::decode_compact_list(blob);
    ok = ok && back.size() == 1 && back[0] == n;
    bytes_checked += ok ? 26 : 0;
    compact_ok += ok;
  }

  // find_node exchange as captured on the wire
  constexpr auto kQuery = "d1:ad2:id20:abcdefghij01234567896:target20:mnopqrstuvwxyz123456e1:q9:find_node1:t2:aa1:y1:qe"sv;
  constexpr auto kResponse =
      "d1:rd2:id20:0123456789abcdefghij5:nodes52:"
      "mnopqrstuvwxyz123456\xc0\xa8\x00\x01\x1a\xe1"
      "ABCDEFGHIJKLMNOPQRST\x5b\xc6\x0a\x14\xc8\xd5"
      "e1:t2:aa1:y1:re"sv;
  bool fixtures = false;
  try {
    auto q = dht::make_find_node("aa", dht::NodeId::from_raw("abcdefghij0123456789"),
                                 dht::NodeId::from_raw("mnopqrstuvwxyz123456"));
    auto r = dht::decode_message(kResponse);
    auto nodes = dht::decode_compact_list(r.body.at("nodes").as_string());
    fixtures = dht::encode_message(q) == kQuery && dht::decode_message(kQuery).method == "find_node" &&
               r.kind == dht::KrpcMessage::Kind::Response && r.tid == "aa" &&
               r.sender() == dht::NodeId::from_raw("0123456789abcdefghij") && nodes.size() == 2 &&
               nodes[0].id == dht::NodeId::from_raw("mnopqrstuvwxyz123456") &&
               nodes[0].endpoint == Endpoint::parse("192.168.0.1:6881") &&
               nodes[1].id == dht::NodeId::from_raw("ABCDEFGHIJKLMNOPQRST") &&
               nodes[1].endpoint == Endpoint::parse("91.198.10.20:51413") && dht::encode_message(r) == kResponse;
  } catch (const std::exception&) {
    fixtures = false;
  }

  Result res;
  res.pass = bencode_ok == kValues && compact_ok == kValues && fixtures;
  res.detail = std::to_string(bencode_ok) + "/" + std::to_string(kValues) + " bencode values, " +
               std::to_string(compact_ok) + "/" + std::to_string(kValues) + " compact nodes (" +
               std::to_string(bytes_checked) + " bytes compared), find_node fixtures " + (fixtures ? "match" : "differ");
  return res;
}

// ---------------------------------------------------------------------------
// Simulator invariants

sim::NatConfig random_cgn(Rng& rng, std::size_t pool) {
  sim::NatConfig cfg;
  cfg.mapping = kMappings[rng.index(4)];
  auto s = kStrategies[rng.index(4)];
  cfg.port_alloc = {s, s == sim::PortStrategy::RandomChunk ? 4096u : 0u};
  cfg.pooling = kPoolings[rng.index(2)];
  for (std::uint32_t i = 1; i <= pool; ++i) cfg.external_pool.push_back(Ipv4{Ipv4::parse("20.0.255.0").value + i});
  cfg.internal_range = Cidr::parse("100.64.0.0/10");
  return cfg;
}

Endpoint random_remote(Rng& rng) {
  return Endpoint{Ipv4{Ipv4::parse("203.0.113.0").value + static_cast<std::uint32_t>(rng.uniform(1, 50))},
                  static_cast<std::uint16_t>(rng.uniform(1, 65535))};
}

bool paired_case(std::uint64_t seed) {
  Rng rng(seed);
  auto cfg = random_cgn(rng, rng.uniform(2, 8));
  cfg.pooling = sim::Pooling::Paired;
  sim::NatDevice nat(cfg, seed);
  double t = 0;
  for (auto subs = rng.uniform(1, 6); subs > 0; --subs) {
    Ipv4 sub{Ipv4::parse("100.64.0.0").value + static_cast<std::uint32_t>(rng.uniform(1, (1u << 22) - 2))};
    std::set<Ipv4> seen;
    for (auto flows = rng.uniform(2, 10); flows > 0; --flows) {
      auto proto = rng.chance(0.5) ? sim::Proto::Udp : sim::Proto::Tcp;
      Endpoint src{sub, static_cast<std::uint16_t>(rng.uniform(1024, 65535))};
      seen.insert(nat.outbound(proto, src, random_remote(rng), t += 0.01).ext_ep.ip);
    }
    if (seen.size() != 1) return false;
  }
  return true;
}

bool expiry_case(std::uint64_t seed) {
  Rng rng(seed);
  auto cfg = random_cgn(rng, 1);
  auto proto = rng.chance(0.5) ? sim::Proto::Udp : sim::Proto::Tcp;
  double timeout = static_cast<double>(rng.uniform(1, 600));
  cfg.udp_timeout = cfg.tcp_timeout = timeout;
  sim::NatDevice nat(cfg, seed);
  Endpoint src{Ipv4::parse("100.64.1.2"), 40000};
  auto dst = random_remote(rng);
  double last = rng.unit() * 1000;
  nat.outbound(proto, src, dst, last);
  if (rng.chance(0.5)) {
    last += rng.unit() * timeout;
    nat.expire(last);
    nat.outbound(proto, src, dst, last);
  }
  double idle;
  switch (rng.index(4)) {
    case 0: idle = timeout; break;
    case 1: idle = timeout + 0.001; break;
    case 2: idle = timeout - 0.001; break;
    default: idle = rng.unit() * 2 * timeout;
  }
  nat.expire(last + idle);
  bool alive = nat.find_by_int(proto, src, dst) != nullptr;
  return alive == (idle <= timeout);
}

bool filtering_case(std::uint64_t seed) {
  Rng rng(seed);
  sim::NatConfig cfg;
  cfg.mapping = kMappings[rng.index(4)];
  cfg.port_alloc = {sim::PortStrategy::Random, 0};
  cfg.external_pool = {Ipv4::parse("198.51.100.1")};
  sim::Topology topo(seed);
  auto nat = topo.add_nat("nat", cfg);
  Endpoint local{Ipv4::parse("192.168.1.2"), static_cast<std::uint16_t>(rng.uniform(1024, 65535))};
  auto client = topo.add_host("client", {local.ip}, nat);
  const Ipv4 remotes[] = {Ipv4::parse("203.0.113.1"), Ipv4::parse("203.0.113.2")};
  sim::HostId hosts[] = {topo.add_host("r1", {remotes[0]}), topo.add_host("r2", {remotes[1]})};
  const std::uint16_t ports[] = {3478, 3479, 5000};
  auto pick = [&](std::size_t nports, std::size_t& which) {
    which = rng.index(2);
    return Endpoint{remotes[which], ports[rng.index(nports)]};
  };

  std::vector<Endpoint> contacted;
  Endpoint ext;
  double t = 0;
  for (auto n = rng.uniform(1, 3); n > 0; --n) {
    std::size_t which;
    auto dst = pick(2, which);
    auto r = topo.send(client, sim::Packet{sim::Proto::Udp, local, dst, 64, {}}, t += 1);
    if (!r.delivered()) return false;
    if (contacted.empty()) ext = r.packet.src;
    contacted.push_back(dst);
  }
  std::size_t which;
  auto from = pick(3, which);
  bool expect = false;
  switch (cfg.mapping) {
    case sim::MappingType::FullCone: expect = true; break;
    case sim::MappingType::AddressRestricted:
      expect = std::any_of(contacted.begin(), contacted.end(), [&](const Endpoint& c) { return c.ip == from.ip; });
      break;
    case sim::MappingType::PortRestricted:
      expect = std::find(contacted.begin(), contacted.end(), from) != contacted.end();
      break;
    case sim::MappingType::Symmetric: expect = from == contacted.front(); break;
  }
  auto r = topo.send(hosts[which], sim::Packet{sim::Proto::Udp, from, ext, 64, {}}, t += 1);
  if (r.delivered() != expect) return false;
  return !expect || (r.to == client && r.packet.dst == local);
}

bool chunk_case(std::uint64_t seed) {
  Rng rng(seed);
  auto cfg = random_cgn(rng, rng.uniform(1, 4));
  std::uint32_t chunk = 1u << rng.uniform(6, 14);
  cfg.port_alloc = {sim::PortStrategy::RandomChunk, chunk};
  sim::NatDevice nat(cfg, seed);
  std::uint32_t first = (1024 + chunk - 1) / chunk;
  std::uint32_t slots = 65536 / chunk - first;
  std::map<std::pair<Ipv4, std::uint32_t>, Ipv4> owner;
  double t = 0;
  for (std::uint32_t i = 0, subs = static_cast<std::uint32_t>(rng.uniform(1, std::min(slots, 10u))); i < subs; ++i) {
    Ipv4 sub{Ipv4::parse("100.64.0.0").value + (i << 8) + 2 + i};
    std::set<std::uint32_t> blocks;
    std::set<std::uint16_t> used;
    for (auto flows = rng.uniform(1, std::min(chunk, 16u)); flows > 0; --flows) {
      std::uint16_t port;
      do port = static_cast<std::uint16_t>(rng.uniform(1024, 65535));
      while (!used.insert(port).second);
      auto ext = nat.outbound(rng.chance(0.5) ? sim::Proto::Udp : sim::Proto::Tcp, {sub, port}, random_remote(rng), t += 0.01).ext_ep;
      auto block = ext.port / chunk;
      if (block < first) return false;
      blocks.insert(block);
      auto [it, fresh] = owner.try_emplace(std::pair{ext.ip, block}, sub);
      if (!fresh && it->second != sub) return false;
    }
    if (blocks.size() != 1 || nat.chunk_base(sub) != *blocks.begin() * chunk) return false;
  }
  return true;
}

std::string random_run(std::uint64_t seed) {
  Rng rng(seed);
  sim::Topology topo(seed);
  auto cgn_cfg = random_cgn(rng, rng.uniform(1, 4));
  cgn_cfg.udp_timeout = static_cast<double>(rng.uniform(5, 60));
  cgn_cfg.tcp_timeout = static_cast<double>(rng.uniform(5, 60));
  auto agg = topo.add_router("agg");
  auto cgn = topo.add_nat("cgn", cgn_cfg, agg);
  std::vector<std::pair<sim::HostId, Ipv4>> clients;
  for (std::uint32_t i = 0, n = static_cast<std::uint32_t>(rng.uniform(1, 6)); i < n; ++i) {
    Ipv4 a{Ipv4::parse("100.64.0.0").value + (i << 8) + 10 + i};
    clients.push_back({topo.add_host("sub" + std::to_string(i), {a}, cgn), a});
  }
  if (rng.chance(0.5)) {
    sim::NatConfig home;
    home.mapping = kMappings[rng.index(4)];
    home.external_pool = {Ipv4::parse("100.64.200.1")};
    auto h = topo.add_nat("home", home, cgn);
    clients.push_back({topo.add_host("dev", {Ipv4::parse("192.168.0.23")}, h), Ipv4::parse("192.168.0.23")});
  }
  std::vector<std::pair<sim::HostId, Ipv4>> servers;
  for (std::uint32_t i = 1; i <= 3; ++i) {
    Ipv4 a{Ipv4::parse("203.0.113.0").value + i};
    servers.push_back({topo.add_host("srv" + std::to_string(i), {a}), a});
  }
  std::vector<std::pair<sim::Proto, Endpoint>> seen;  // translated sources the servers observed
  double t = 0;
  for (auto n = rng.uniform(20, 60); n > 0; --n) {
    t += rng.unit() * 8;
    auto proto = rng.chance(0.5) ? sim::Proto::Udp : sim::Proto::Tcp;
    const auto& srv = servers[rng.index(servers.size())];
    if (seen.empty() || rng.chance(0.6)) {
      const auto& c = clients[rng.index(clients.size())];
      int ttl = rng.chance(0.2) ? static_cast<int>(rng.uniform(1, 4)) : 64;
      Endpoint dst{srv.second, static_cast<std::uint16_t>(rng.uniform(1, 3))};
      auto r = topo.send(c.first, sim::Packet{proto, {c.second, static_cast<std::uint16_t>(rng.uniform(1024, 1100))}, dst, ttl, {}}, t);
      if (r.delivered()) seen.push_back({proto, r.packet.src});
    } else {
      auto [p, to] = seen[rng.index(seen.size())];
      topo.send(srv.first, sim::Packet{p, {srv.second, static_cast<std::uint16_t>(rng.uniform(1, 3))}, to, 64, {}}, t);
    }
  }
  return topo.trace_text();
}

Result simulator_invariants() {
  constexpr std::size_t kCases = 1000;
  struct Check {
    const char* name;
    std::function<bool(std::uint64_t)> run;
    std::size_t ok = 0;
  };
  std::vector<Check> checks{
      {"paired pooling", paired_case},
      {"strict expiry", expiry_case},
      {"filtering", filtering_case},
      {"chunk confinement", chunk_case},
      {"determinism", [](std::uint64_t s) {
         auto a = random_run(s);
         return !a.empty() && a == random_run(s);
       }},
  };
  Result res;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    auto& c = checks[k];
    for (std::size_t i = 0; i < kCases; ++i) {
      try {
        c.ok += c.run(Rng::mix(6000 + k, i));
      } catch (const std::exception&) {
      }
    }
    res.pass = res.pass && c.ok == kCases;
    res.detail += (k ? ", " : "") + std::string(c.name) + " " + std::to_string(c.ok) + "/" + std::to_string(kCases);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Report percentages against hand-computed values

Result report_percentages() {
  using report::MethodRow;
  using report::RegionRow;
  auto v = [](Asn asn, Method m, Verdict x) {
    AsVerdict a;
    a.asn = asn;
    a.method = m;
    a.verdict = x;
    return a;
  };
  const auto D = Method::Dht, N = Method::SessionNonCellular, C = Method::SessionCellular;
  const auto P = Verdict::CgnPositive, G = Verdict::Negative, I = Verdict::Insufficient;
  std::vector<AsVerdict> verdicts{v(1, D, P), v(2, D, P), v(3, D, I), v(3, N, P), v(4, D, P), v(4, N, G), v(4, C, P),
                                  v(5, N, G), v(5, C, G), v(6, N, I), v(6, C, P), v(7, D, G), v(7, N, P), v(8, C, I),
                                  v(9, D, I), v(9, N, I), v(9, C, G)};
  RirMap rir;
  for (Asn a = 1; a <= 5; ++a) rir.add(a, Region::RIPE);
  rir.add_range(6, 8, Region::ARIN);
  auto rep = report::aggregate(verdicts,
                               {report::Population{"routed", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
                                report::Population{"pbl", {1, 3, 6, 8, 9, 10}}},
                               rir, 0, "hand");

  const std::vector<MethodRow> routed{{"dht", 4, 3, 40.0, 75.0, 30.0},
                                      {"session-noncellular", 4, 2, 40.0, 50.0, 20.0},
                                      {"union", 6, 5, 60.0, 83.3, 50.0},
                                      {"session-cellular", 4, 2, 40.0, 50.0, 20.0}};
  const std::vector<MethodRow> pbl{{"dht", 1, 1, 16.7, 100.0, 16.7},
                                   {"session-noncellular", 1, 1, 16.7, 100.0, 16.7},
                                   {"union", 2, 2, 33.3, 100.0, 33.3},
                                   {"session-cellular", 2, 1, 33.3, 50.0, 16.7}};
  const std::vector<RegionRow> regions{{Region::ARIN, 3, 2, 66.7, 1, 1, 100.0, 1, 1, 100.0},
                                       {Region::RIPE, 5, 5, 100.0, 5, 4, 80.0, 2, 1, 50.0},
                                       {Region::Unknown, 2, 1, 50.0, 0, 0, 0.0, 1, 0, 0.0}};
  std::size_t cells = 0, matched = 0;
  auto cmp = [&](const auto& got, const auto& want) {
    for (std::size_t i = 0; i < want.size(); ++i) {
      ++cells;
      matched += i < got.size() && got[i] == want[i];
    }
  };
  bool shape = rep.tables.size() == 2 && rep.tables[0].size == 10 && rep.tables[1].size == 6;
  if (shape) {
    cmp(rep.tables[0].rows, routed);
    cmp(rep.tables[1].rows, pbl);
  }
  cmp(rep.regions, regions);

  Result res;
  res.pass = shape && matched == cells && cells == 11;
  res.detail = std::to_string(matched) + "/" + std::to_string(cells) + " table and region rows match the hand-computed values";
  return res;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Result (*)()>> criteria{
      {"nat-behaviour-recovery", behaviour_recovery}, {"ttl-hop-and-timeout", ttl_enumeration},
      {"dht-leakage-detection", dht_detection},       {"session-heuristics", session_detection},
      {"wire-codecs", wire_codecs},                   {"simulator-invariants", simulator_invariants},
      {"report-percentages", report_percentages},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << r.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
