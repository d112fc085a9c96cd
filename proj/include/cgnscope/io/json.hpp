// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// JSON Lines forms of peer records, sessions, verdicts and reports.

#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgnscope/dht/peer_record.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/report/aggregate.hpp"
#include "cgnscope/session_record.hpp"
#include "cgnscope/verdict.hpp"

namespace cgn::io {

using nlohmann::json;

namespace detail {

inline const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type");
  }
}

inline Ipv4 get_ip(const json& j, const char* key) { return Ipv4::parse(get<std::string>(j, key)); }

inline std::uint16_t get_port(const json& j, const char* key) {
  auto p = get<std::int64_t>(j, key);
  if (p < 0 || p > 65535) throw ParseError(std::string("field '") + key + "' is not a port");
  return static_cast<std::uint16_t>(p);
}

}  // namespace detail

// --- peer records ----------------------------------------------------------

inline json to_json(const dht::PeerRecord& r) {
  return json{{"ts", r.ts},
              {"reporter_ip", r.reporter.endpoint.ip.to_string()},
              {"reporter_port", r.reporter.endpoint.port},
              {"reporter_nodeid_hex", r.reporter.id.hex()},
              {"reported_ip", r.reported.endpoint.ip.to_string()},
              {"reported_port", r.reported.endpoint.port},
              {"reported_nodeid_hex", r.reported.id.hex()},
              {"responded_ping", r.responded_ping}};
}

inline dht::PeerRecord peer_record_from_json(const json& j) {
  using namespace detail;
  dht::PeerRecord r;
  r.ts = get<double>(j, "ts");
  r.reporter = {{get_ip(j, "reporter_ip"), get_port(j, "reporter_port")},
                dht::NodeId::from_hex(get<std::string>(j, "reporter_nodeid_hex"))};
  r.reported = {{get_ip(j, "reported_ip"), get_port(j, "reported_port")},
                dht::NodeId::from_hex(get<std::string>(j, "reported_nodeid_hex"))};
  r.responded_ping = get<bool>(j, "responded_ping");
  return r;
}

// --- sessions ----------------------------------------------------------------

inline json to_json(const StunOutcome& s) {
  json j{{"mapping", to_string(s.mapping)},
         {"mapped_ip", s.mapped.ip.to_string()},
         {"mapped_port", s.mapped.port},
         {"test1", s.test1}};
  j["test2"] = s.test2 ? json(*s.test2) : json(nullptr);
  j["same_mapping"] = s.same_mapping ? json(*s.same_mapping) : json(nullptr);
  j["test3"] = s.test3 ? json(*s.test3) : json(nullptr);
  return j;
}

inline json to_json(const TtlResult& t) {
  json nats = json::array();
  for (const auto& n : t.nats)
    nats.push_back({{"hop", n.hop}, {"timeout_low", n.timeout_low}, {"timeout_high", n.timeout_high}, {"estimate", n.estimate()}});
  return json{{"nats", nats},
              {"path_hops", t.path_hops},
              {"experiments", t.experiments},
              {"address_mismatch", t.address_mismatch},
              {"stateful_no_nat", t.stateful_no_nat},
              {"unstable_path", t.unstable_path}};
}

inline json to_json(const SessionRecord& s) {
  json flows = json::array();
  for (const auto& f : s.flows)
    flows.push_back({{"local_port", f.local_port}, {"observed_ip", f.observed_ip.to_string()},
                     {"observed_port", f.observed_port}, {"index", f.index}});
  json j{{"session_id", s.session_id}, {"asn", s.asn},     {"access", to_string(s.access)},
         {"ip_dev", s.ip_dev.to_string()}, {"ip_pub", s.ip_pub.to_string()}, {"flows", flows},
         {"ts", s.ts},                 {"exclude", s.exclude}};
  j["ip_cpe"] = s.ip_cpe ? json(s.ip_cpe->to_string()) : json(nullptr);
  j["stun"] = s.stun ? to_json(*s.stun) : json(nullptr);
  j["ttl_result"] = s.ttl_result ? to_json(*s.ttl_result) : json(nullptr);
  return j;
}

inline std::optional<bool> opt_bool(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return detail::get<bool>(j, key);
}

inline SessionRecord session_from_json(const json& j) {
  using namespace detail;
  SessionRecord s;
  s.session_id = get<std::string>(j, "session_id");
  s.asn = get<Asn>(j, "asn");
  auto access = get<std::string>(j, "access");
  if (access == "cellular") s.access = Access::Cellular;
  else if (access == "noncellular") s.access = Access::NonCellular;
  else throw ParseError("unknown access '" + access + "'");
  s.ip_dev = get_ip(j, "ip_dev");
  if (j.contains("ip_cpe") && !j.at("ip_cpe").is_null()) s.ip_cpe = get_ip(j, "ip_cpe");
  s.ip_pub = get_ip(j, "ip_pub");
  if (is_reserved(s.ip_pub)) throw InputError("ip_pub " + s.ip_pub.to_string() + " is not routable");
  if (j.contains("flows"))
    for (const auto& f : field(j, "flows")) {
      FlowObservation o{get_port(f, "local_port"), get_ip(f, "observed_ip"), get_port(f, "observed_port"),
                        f.contains("index") ? get<int>(f, "index") : static_cast<int>(s.flows.size())};
      s.flows.push_back(o);
    }
  std::stable_sort(s.flows.begin(), s.flows.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  if (j.contains("stun") && !j.at("stun").is_null()) {
    const auto& t = j.at("stun");
    StunOutcome o;
    auto m = stun_mapping_from_string(get<std::string>(t, "mapping"));
    if (!m) throw ParseError("unknown STUN mapping");
    o.mapping = *m;
    o.mapped = {get_ip(t, "mapped_ip"), get_port(t, "mapped_port")};
    o.test1 = get<bool>(t, "test1");
    o.test2 = opt_bool(t, "test2");
    o.same_mapping = opt_bool(t, "same_mapping");
    o.test3 = opt_bool(t, "test3");
    s.stun = o;
  }
  if (j.contains("ttl_result") && !j.at("ttl_result").is_null()) {
    const auto& t = j.at("ttl_result");
    TtlResult r;
    for (const auto& n : field(t, "nats"))
      r.nats.push_back({get<int>(n, "hop"), get<double>(n, "timeout_low"), get<double>(n, "timeout_high")});
    r.path_hops = get<int>(t, "path_hops");
    r.experiments = t.contains("experiments") ? get<int>(t, "experiments") : 0;
    r.address_mismatch = get<bool>(t, "address_mismatch");
    r.stateful_no_nat = get<bool>(t, "stateful_no_nat");
    r.unstable_path = get<bool>(t, "unstable_path");
    s.ttl_result = r;
  }
  s.ts = j.contains("ts") ? get<double>(j, "ts") : 0;
  s.exclude = j.contains("exclude") && get<bool>(j, "exclude");
  return s;
}

// --- verdicts ----------------------------------------------------------------

inline json to_json(const AsVerdict& v) {
  json ranges = json::array();
  for (auto r : v.observed_ranges) ranges.push_back(to_string(r));
  json routable = json::array();
  for (const auto& r : v.routable_internal) routable.push_back({{"block", r.block.to_string()}, {"routed", r.routed}});
  json j{{"asn", v.asn}, {"verdict", to_string(v.verdict)}, {"ranges", ranges}, {"routable_internal", routable}};
  if (v.method == Method::Dht) {
    j["method"] = "dht";
    j["pub_ips"] = v.pub_ips;
    j["int_ips"] = v.int_ips;
    j["range"] = v.range ? json(to_string(*v.range)) : json(nullptr);
    j["queried_peers"] = v.queried_peers;
  } else {
    j["method"] = "session";
    j["access"] = v.method == Method::SessionCellular ? "cellular" : "noncellular";
    j["class"] = v.cls;
    j["n"] = v.n;
    j["distinct24"] = v.distinct24;
    j["sessions"] = v.sessions;
    j["categories"] = v.category_counts;
  }
  return j;
}

inline AsVerdict verdict_from_json(const json& j) {
  using namespace detail;
  AsVerdict v;
  v.asn = get<Asn>(j, "asn");
  auto verdict = verdict_from_string(get<std::string>(j, "verdict"));
  if (!verdict) throw ParseError("unknown verdict");
  v.verdict = *verdict;
  auto method = get<std::string>(j, "method");
  if (j.contains("ranges"))
    for (const auto& r : j.at("ranges")) {
      auto rr = reserved_range_from_string(r.get<std::string>());
      if (!rr) throw ParseError("unknown range '" + r.get<std::string>() + "'");
      v.observed_ranges.push_back(*rr);
    }
  if (j.contains("routable_internal"))
    for (const auto& r : j.at("routable_internal"))
      v.routable_internal.push_back({Cidr::parse(get<std::string>(r, "block")), get<bool>(r, "routed")});
  if (method == "dht") {
    v.method = Method::Dht;
    v.pub_ips = get<std::size_t>(j, "pub_ips");
    v.int_ips = get<std::size_t>(j, "int_ips");
    if (j.contains("range") && !j.at("range").is_null()) v.range = reserved_range_from_string(get<std::string>(j, "range"));
    v.queried_peers = j.contains("queried_peers") ? get<std::size_t>(j, "queried_peers") : 0;
  } else if (method == "session") {
    auto access = get<std::string>(j, "access");
    if (access == "cellular") v.method = Method::SessionCellular;
    else if (access == "noncellular") v.method = Method::SessionNonCellular;
    else throw ParseError("unknown access '" + access + "'");
    v.cls = j.contains("class") ? get<std::string>(j, "class") : "";
    v.n = get<std::size_t>(j, "n");
    v.distinct24 = j.contains("distinct24") ? get<std::size_t>(j, "distinct24") : 0;
    v.sessions = j.contains("sessions") ? get<std::size_t>(j, "sessions") : 0;
    if (j.contains("categories")) v.category_counts = j.at("categories").get<std::map<std::string, std::size_t>>();
  } else {
    throw ParseError("unknown method '" + method + "'");
  }
  return v;
}

// --- report ------------------------------------------------------------------

inline json to_json(const report::Report& r) {
  json tables = json::array();
  for (const auto& t : r.tables) {
    json rows = json::array();
    for (const auto& m : t.rows)
      rows.push_back({{"method", m.method}, {"covered", m.covered}, {"covered_pct", m.covered_pct},
                      {"positive", m.positive}, {"positive_pct", m.positive_pct},
                      {"positive_pop_pct", m.positive_pop_pct}});
    tables.push_back({{"population", t.population}, {"size", t.size}, {"rows", rows}});
  }
  json regions = json::array();
  for (const auto& g : r.regions)
    regions.push_back({{"region", to_string(g.region)},
                       {"ases", g.ases},
                       {"covered", g.covered},
                       {"coverage_pct", g.coverage_pct},
                       {"noncellular_covered", g.noncellular_covered},
                       {"noncellular_positive", g.noncellular_positive},
                       {"noncellular_pct", g.noncellular_pct},
                       {"cellular_covered", g.cellular_covered},
                       {"cellular_positive", g.cellular_positive},
                       {"cellular_pct", g.cellular_pct}});
  json ranges = json::array();
  for (const auto& u : r.ranges) {
    json rs = json::array();
    for (auto x : u.ranges) rs.push_back(to_string(x));
    json rt = json::array();
    for (const auto& x : u.routable) rt.push_back({{"block", x.block.to_string()}, {"routed", x.routed}});
    ranges.push_back({{"asn", u.asn}, {"ranges", rs}, {"routable_internal", rt}, {"multi_range", u.multi_range()}});
  }
  return json{{"schema", r.schema},       {"routing_table", r.routing_source}, {"tables", tables},
              {"region_population", r.region_population}, {"regions", regions}, {"range_usage", ranges},
              {"notes", r.notes}};
}

// --- JSON Lines ----------------------------------------------------------------

template <typename T>
void write_jsonl(std::ostream& out, const std::vector<T>& items) {
  for (const auto& x : items) out << to_json(x).dump() << '\n';
}

/// Parses each non-blank line with `conv`; errors carry the line number.
template <typename Conv>
auto read_jsonl(std::istream& in, Conv conv) {
  std::vector<decltype(conv(json{}))> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(conv(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(n) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(n) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cgn::io
