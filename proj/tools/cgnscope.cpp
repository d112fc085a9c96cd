// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// cgnscope: simulate NATs, crawl the DHT, probe from a client, detect CGNs
// and aggregate the verdicts.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "cgnscope/detect/dht.hpp"
#include "cgnscope/detect/session.hpp"
#include "cgnscope/dht/crawler.hpp"
#include "cgnscope/dht/population.hpp"
#include "cgnscope/dht/sim_transport.hpp"
#include "cgnscope/dht/udp_transport.hpp"
#include "cgnscope/io/json.hpp"
#include "cgnscope/natsim/topology_file.hpp"
#include "cgnscope/probe/live_driver.hpp"
#include "cgnscope/probe/scenario.hpp"
#include "cgnscope/report/aggregate.hpp"
#include "cgnscope/report/render.hpp"

using namespace cgn;
using nlohmann::json;

namespace {

constexpr int kInputErrorExit = 2;
constexpr int kRuntimeErrorExit = 1;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

// Writes to `path`, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw InputError("cannot write " + path);
    }
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

RoutingTable load_routes(const std::string& path) {
  if (path.empty()) return {};
  auto in = open_in(path);
  return read_routing_table(in, std::filesystem::path(path).filename().string());
}

void write_routes(const std::string& path, const std::vector<RouteEntry>& entries) {
  if (path.empty()) return;
  Output out(path);
  for (const auto& e : entries) out.get() << e.prefix.to_string() << ',' << e.origin << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : cgn::detail::split(s, ',')) {
    auto t = std::string(cgn::detail::trim(part));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

// "live" or "sim:<topology-file>"
struct TransportSpec {
  bool live = true;
  std::string topology;
};

TransportSpec parse_transport(const std::string& s) {
  if (s == "live") return {};
  if (s.starts_with("sim:") && s.size() > 4) return {false, s.substr(4)};
  throw InputError("transport must be 'live' or 'sim:<topology-file>'");
}

sim::TopologyDescription load_topology(const std::string& path, std::optional<std::uint64_t> seed) {
  auto in = open_in(path);
  return sim::read_topology(in, seed);
}

// --- simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string topology, events, out;
  std::optional<std::uint64_t> seed;
  bool text = false;
};

int run_simulate(const SimulateArgs& a) {
  auto desc = load_topology(a.topology, a.seed);
  auto in = open_in(a.events);
  auto events = sim::read_events(in, desc.topology);
  desc.topology.set_tracing(true);
  auto text = sim::run_events(desc.topology, events);
  Output out(a.out);
  if (a.text) {
    out.get() << text;
    return 0;
  }
  for (const auto& r : desc.topology.trace())
    out.get() << json{{"time", r.time},
                      {"proto", sim::to_string(r.proto)},
                      {"src", r.src.to_string()},
                      {"dst", r.dst.to_string()},
                      {"ttl", r.ttl},
                      {"outcome", sim::to_string(r.outcome)},
                      {"hop", r.hop}}
                     .dump()
              << '\n';
  return 0;
}

// --- synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string what = "dht";
  std::uint64_t seed = 1;
  std::string out, routes_out, truth_out;
  std::size_t ases = 12;
  std::size_t peers_per_as = 40;
  std::size_t public_peers = 200;
  Asn asn = 64512;
  std::string access = "noncellular";
  bool cgn = true;
  std::size_t sessions = 40;
  bool stun = false, ttl = false;
};

int run_synth(const SynthArgs& a) {
  Output out(a.out);
  if (a.what == "dht") {
    static constexpr dht::AsKind kKinds[] = {dht::AsKind::CgnPooled, dht::AsKind::HomeNat, dht::AsKind::SubThreshold};
    static constexpr ReservedRange kRanges[] = {ReservedRange::R100X, ReservedRange::R10X, ReservedRange::R172X,
                                                ReservedRange::R192X};
    std::vector<dht::DhtAsSpec> specs;
    for (std::size_t k = 0; k < a.ases; ++k)
      specs.push_back({static_cast<Asn>(64512 + k), kKinds[k % 3], 8,
                       k % 2 ? sim::Pooling::Arbitrary : sim::Pooling::Paired, kRanges[k % 4], a.public_peers, 3});
    auto fx = dht::synth_peer_records(specs, a.peers_per_as, a.seed);
    io::write_jsonl(out.get(), fx.records);
    std::vector<RouteEntry> routes;
    for (std::size_t k = 0; k < specs.size(); ++k) routes.push_back({dht::fixture_prefix(k), specs[k].asn});
    write_routes(a.routes_out, routes);
    if (!a.truth_out.empty()) {
      Output truth(a.truth_out);
      for (const auto& s : specs)
        truth.get() << s.asn << ',' << dht::to_string(s.kind) << ',' << (fx.expect_positive.at(s.asn) ? "cgn-positive" : "negative")
                    << '\n';
    }
    return 0;
  }
  if (a.what == "sessions") {
    probe::SessionFixtureSpec spec;
    spec.asn = a.asn;
    if (a.access == "cellular") spec.access = Access::Cellular;
    else if (a.access == "noncellular") spec.access = Access::NonCellular;
    else throw InputError("access must be cellular or noncellular");
    spec.carrier_nat = a.cgn;
    spec.sessions = a.sessions;
    spec.stun = a.stun;
    spec.ttl = a.ttl;
    io::write_jsonl(out.get(), probe::synth_sessions(spec, a.seed));
    write_routes(a.routes_out, {{spec.public_prefix, spec.asn}});
    return 0;
  }
  throw InputError("synth target must be 'dht' or 'sessions'");
}

// --- crawl ---------------------------------------------------------------------

struct CrawlArgs {
  std::vector<std::string> bootstrap;
  std::size_t budget = 1000;
  std::uint64_t seed = 1;
  std::string transport = "live";
  std::string out;
  std::uint16_t port = 0;
};

int run_crawl(const CrawlArgs& a) {
  auto t = parse_transport(a.transport);
  std::vector<Endpoint> boot;
  dht::CrawlOptions opts;
  opts.budget = a.budget;
  opts.seed = a.seed;
  dht::CrawlResult res;
  if (t.live) {
    for (const auto& b : a.bootstrap) boot.push_back(net::resolve(b));
    dht::UdpTransport udp(Endpoint{Ipv4{0}, a.port});
    res = dht::crawl(udp, boot, opts);
  } else {
    for (const auto& b : a.bootstrap) boot.push_back(Endpoint::parse(b));
    auto desc = load_topology(t.topology, a.seed);
    auto crawler = desc.host_with_role("crawler");
    if (!crawler) throw InputError("topology has no host with role=crawler");
    Endpoint ep{desc.topology.host(*crawler).addresses.front(), 6881};
    dht::SimTransport net(desc.topology, *crawler, ep);
    dht::place_topology_nodes(net, desc, ep, a.seed);
    res = dht::crawl(net, boot, opts);
  }
  Output out(a.out);
  io::write_jsonl(out.get(), res.records);
  std::cerr << "queried " << res.stats.queried_peers << " peers (" << res.stats.responsive_peers << " responsive), "
            << res.records.size() << " records, " << res.stats.batches << " escalation batches\n";
  return 0;
}

// --- detect --------------------------------------------------------------------

struct DetectArgs {
  std::string input, routes, out;
  std::uint64_t seed = 1;
};

int run_detect_dht(const DetectArgs& a) {
  auto in = open_in(a.input);
  auto records = io::read_jsonl(in, io::peer_record_from_json);
  auto verdicts = detect::detect_dht(std::move(records), load_routes(a.routes));
  Output out(a.out);
  io::write_jsonl(out.get(), verdicts);
  return 0;
}

int run_detect_sessions(const DetectArgs& a) {
  auto in = open_in(a.input);
  auto sessions = io::read_jsonl(in, io::session_from_json);
  auto verdicts = detect::detect_sessions(sessions, load_routes(a.routes));
  Output out(a.out);
  io::write_jsonl(out.get(), verdicts);
  return 0;
}

// --- probe ---------------------------------------------------------------------

struct ProbeArgs {
  std::string transport = "live";
  std::string echo, stun, client;
  std::string session_id = "s1";
  Asn asn = 0;
  std::string access = "noncellular";
  std::optional<std::string> ip_cpe;
  bool do_stun = true, do_ttl = false;
  std::uint64_t seed = 1;
  double timeout = 2.0;
  std::string out;
};

SessionRecord probe_session(probe::ProbeDriver& d, const ProbeArgs& a) {
  SessionRecord s;
  s.session_id = a.session_id;
  s.asn = a.asn;
  if (a.access == "cellular") s.access = Access::Cellular;
  else if (a.access == "noncellular") s.access = Access::NonCellular;
  else throw InputError("access must be cellular or noncellular");
  s.ip_dev = d.local_ip();
  if (a.ip_cpe) s.ip_cpe = Ipv4::parse(*a.ip_cpe);
  s.flows = probe::collect_port_trace(d);
  if (s.flows.empty()) throw Unreachable("no echo replies");
  s.ip_pub = s.flows.front().observed_ip;
  if (a.do_stun) s.stun = probe::stun_classify(d, a.seed);
  if (a.do_ttl) {
    if (!d.supports_reachability()) throw InputError("--ttl needs a driver with server-side probing (sim:)");
    s.ttl_result = probe::ttl_enumerate(d);
  }
  s.ts = d.now();
  return s;
}

int run_probe(const ProbeArgs& a) {
  auto t = parse_transport(a.transport);
  SessionRecord s;
  if (t.live) {
    if (a.echo.empty()) throw InputError("--echo host:port is required for live probing");
    probe::stun::ServerAddresses stun_srv{};
    auto addrs = split_list(a.stun);
    if (a.do_stun) {
      if (addrs.size() != 2) throw InputError("--stun needs primary,alternate endpoints");
      stun_srv = {net::resolve(addrs[0]), net::resolve(addrs[1])};
    }
    probe::LiveDriver d(net::resolve(a.echo), stun_srv, a.timeout);
    s = probe_session(d, a);
  } else {
    auto desc = load_topology(t.topology, a.seed);
    auto server_host = desc.host_with_role("server");
    if (!server_host) throw InputError("topology has no host with role=server");
    const auto& sh = desc.topology.host(*server_host);
    if (sh.addresses.size() < 2) throw InputError("the server host needs two addresses");
    probe::SimServer srv;
    srv.host = *server_host;
    srv.primary = sh.addresses[0];
    srv.alternate = sh.addresses[1];
    auto client = desc.topology.find_host(a.client.empty() ? "client" : a.client);
    if (!client) throw InputError("unknown client host '" + a.client + "'");
    probe::SimDriver d(desc.topology, *client, srv, a.seed);
    s = probe_session(d, a);
  }
  Output out(a.out);
  out.get() << io::to_json(s).dump() << '\n';
  return 0;
}

// --- report --------------------------------------------------------------------

struct ReportArgs {
  std::string verdicts, population, eyeball, rir, routes, out;
  std::uint64_t seed = 1;
  bool json_stdout = false;
};

int run_report(const ReportArgs& a) {
  std::vector<AsVerdict> verdicts;
  for (const auto& path : split_list(a.verdicts)) {
    auto in = open_in(path);
    auto v = io::read_jsonl(in, io::verdict_from_json);
    verdicts.insert(verdicts.end(), v.begin(), v.end());
  }
  std::vector<report::Population> pops;
  auto stem = [](const std::string& p) { return std::filesystem::path(p).stem().string(); };
  if (!a.population.empty()) {
    auto in = open_in(a.population);
    pops.push_back(report::read_population(in, stem(a.population)));
  }
  std::size_t region_pop = 0;
  auto eyeballs = split_list(a.eyeball);
  for (std::size_t i = 0; i < eyeballs.size(); ++i) {
    auto path = eyeballs[i];
    auto source = i == 0 ? report::EyeballSource::PblLike : report::EyeballSource::ApnicLike;
    if (path.starts_with("pbl:")) {
      source = report::EyeballSource::PblLike;
      path = path.substr(4);
    } else if (path.starts_with("apnic:")) {
      source = report::EyeballSource::ApnicLike;
      path = path.substr(6);
    }
    auto in = open_in(path);
    if (i == 0) region_pop = pops.size();
    pops.push_back(report::read_population(in, stem(path), source));
  }
  if (pops.empty()) throw InputError("give --population and/or --eyeball");
  RirMap rir;
  if (!a.rir.empty()) {
    auto in = open_in(a.rir);
    rir = read_rir_map(in);
  }
  auto rep = report::aggregate(verdicts, pops, rir, region_pop,
                               a.routes.empty() ? std::string{} : std::filesystem::path(a.routes).filename().string());
  auto j = io::to_json(rep);
  if (!a.out.empty()) {
    Output out(a.out);
    out.get() << j.dump(2) << '\n';
  }
  if (a.json_stdout) std::cout << j.dump() << '\n';
  else report::render_text(std::cout, rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cgnscope: carrier-grade NAT detection toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim_a;
  auto* simulate = app.add_subcommand("simulate", "run an event script over a topology file, emit the packet trace");
  simulate->add_option("--topology", sim_a.topology, "topology file")->required();
  simulate->add_option("--events", sim_a.events, "event script")->required();
  simulate->add_option("--seed", sim_a.seed, "overrides the topology file's seed");
  simulate->add_option("--out", sim_a.out, "output file (default stdout)");
  simulate->add_flag("--text", sim_a.text, "plain trace lines instead of JSONL");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "generate DHT leakage records or probe sessions from simulated networks");
  synth->add_option("what", syn.what, "dht or sessions")->required();
  synth->add_option("--seed", syn.seed);
  synth->add_option("--out", syn.out);
  synth->add_option("--routes-out", syn.routes_out, "write the fixture routing table (prefix,asn)");
  synth->add_option("--truth-out", syn.truth_out, "dht: write asn,kind,expected-verdict");
  synth->add_option("--ases", syn.ases, "dht: number of ASes (kinds rotate cgn, home, sub-threshold)");
  synth->add_option("--peers-per-as", syn.peers_per_as, "dht: NATed peers per AS");
  synth->add_option("--public-peers", syn.public_peers, "dht: routable peers per AS");
  synth->add_option("--asn", syn.asn, "sessions: AS number");
  synth->add_option("--access", syn.access, "sessions: cellular or noncellular");
  synth->add_flag("--cgn,!--no-cgn", syn.cgn, "sessions: put a carrier NAT in the path");
  synth->add_option("--sessions", syn.sessions, "sessions: how many");
  synth->add_flag("--stun", syn.stun, "sessions: run STUN classification");
  synth->add_flag("--ttl", syn.ttl, "sessions: run TTL enumeration");

  CrawlArgs cr;
  auto* crawl = app.add_subcommand("crawl", "crawl the DHT and emit leakage records");
  crawl->add_option("--bootstrap", cr.bootstrap, "host:port, repeatable")->required();
  crawl->add_option("--budget", cr.budget, "peers to query, bootstrap included");
  crawl->add_option("--seed", cr.seed);
  crawl->add_option("--transport", cr.transport, "live or sim:<topology-file>");
  crawl->add_option("--port", cr.port, "live: local UDP port");
  crawl->add_option("--out", cr.out);

  DetectArgs dd;
  auto* detect_dht = app.add_subcommand("detect-dht", "classify ASes from leakage records");
  detect_dht->add_option("--records", dd.input, "peer records JSONL")->required();
  detect_dht->add_option("--routes", dd.routes, "routing table CSV (prefix,asn)")->required();
  detect_dht->add_option("--seed", dd.seed, "unused; accepted for uniformity");
  detect_dht->add_option("--out", dd.out);

  DetectArgs ds;
  auto* detect_sessions = app.add_subcommand("detect-sessions", "classify ASes from probe sessions");
  detect_sessions->add_option("--sessions", ds.input, "session JSONL")->required();
  detect_sessions->add_option("--routes", ds.routes, "routing table CSV (prefix,asn)")->required();
  detect_sessions->add_option("--seed", ds.seed, "unused; accepted for uniformity");
  detect_sessions->add_option("--out", ds.out);

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe", "run one measurement session and emit it as JSONL");
  probe->add_option("--transport", pa.transport, "live or sim:<topology-file>");
  probe->add_option("--echo", pa.echo, "live: echo server host:port");
  probe->add_option("--stun", pa.stun, "live: primary,alternate STUN endpoints");
  probe->add_option("--client", pa.client, "sim: client host name");
  probe->add_option("--session-id", pa.session_id);
  probe->add_option("--asn", pa.asn);
  probe->add_option("--access", pa.access, "cellular or noncellular");
  probe->add_option("--ip-cpe", pa.ip_cpe, "CPE external address, when known");
  probe->add_flag("--stun-test,!--no-stun-test", pa.do_stun, "run STUN classification");
  probe->add_flag("--ttl", pa.do_ttl, "run TTL enumeration (sim only)");
  probe->add_option("--timeout", pa.timeout, "live: seconds to wait per exchange");
  probe->add_option("--seed", pa.seed);
  probe->add_option("--out", pa.out);

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "aggregate verdicts over AS populations");
  report->add_option("--verdicts", ra.verdicts, "comma-separated verdict JSONL files")->required();
  report->add_option("--population", ra.population, "routed AS list (asn per line)");
  report->add_option("--eyeball", ra.eyeball, "comma-separated asn,weight lists: PBL-like first, APNIC-like second");
  report->add_option("--rir", ra.rir, "asn,region CSV");
  report->add_option("--routes", ra.routes, "routing table the verdicts used, recorded in the report");
  report->add_option("--out", ra.out, "report JSON");
  report->add_option("--seed", ra.seed, "unused; accepted for uniformity");
  report->add_flag("--json", ra.json_stdout, "print JSON instead of text");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) return run_simulate(sim_a);
    if (*synth) return run_synth(syn);
    if (*crawl) return run_crawl(cr);
    if (*detect_dht) return run_detect_dht(dd);
    if (*detect_sessions) return run_detect_sessions(ds);
    if (*probe) return run_probe(pa);
    if (*report) return run_report(ra);
  } catch (const ParseError& e) {
    std::cerr << "cgnscope: " << e.what() << '\n';
    return kInputErrorExit;
  } catch (const InputError& e) {
    std::cerr << "cgnscope: " << e.what() << '\n';
    return kInputErrorExit;
  } catch (const std::exception& e) {
    std::cerr << "cgnscope: " << e.what() << '\n';
    return kRuntimeErrorExit;
  }
  return 0;
}
