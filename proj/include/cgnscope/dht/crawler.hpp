// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// find_node crawler with leak-driven escalation. Runs over any
// DatagramTransport; all state changes happen on the single receive loop.

#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/dht/krpc.hpp"
#include "cgnscope/dht/peer_record.hpp"
#include "cgnscope/rng.hpp"

namespace cgn::dht {

struct Datagram {
  Endpoint from;
  std::string bytes;
};

class DatagramTransport {
 public:
  virtual ~DatagramTransport() = default;
  virtual void send_to(const Endpoint& to, std::string_view bytes) = 0;
  /// Next datagram arriving no later than `deadline`, else nullopt once the
  /// deadline has passed.
  virtual std::optional<Datagram> receive(double deadline) = 0;
  virtual double now() const = 0;
};

struct CrawlOptions {
  std::size_t budget = 1000;  ///< peers to query with find_node, bootstrap included
  std::uint64_t seed = 1;
  int initial_queries = 5;
  int batch_size = 10;
  int max_batches = 50;
  std::size_t max_in_flight = 64;
  double retransmit_after = 2.0;
  double timeout = 5.0;
};

struct CrawlStats {
  std::size_t queried_peers = 0;
  std::size_t responsive_peers = 0;
  std::size_t unresponsive_peers = 0;
  std::size_t batches = 0;
  std::size_t queries_sent = 0;
  std::size_t pings_sent = 0;
};

struct CrawlResult {
  std::vector<PeerRecord> records;
  CrawlStats stats;
};

class Crawler {
 public:
  Crawler(DatagramTransport& transport, CrawlOptions opts)
      : net_(transport), opts_(opts), rng_(opts.seed), self_(NodeId::random(rng_)) {}

  const NodeId& self() const { return self_; }

  CrawlResult run(const std::vector<Endpoint>& bootstrap) {
    if (opts_.budget == 0) return {};
    for (const auto& b : bootstrap) start_session(b, std::nullopt);
    loop();
    return finish();
  }

 private:
  struct Session {
    Endpoint ep;
    std::optional<NodeId> id;
    int outstanding = 0;
    bool responded = false;
    bool saw_internal = false;
    bool escalated = false;
    std::size_t new_internal = 0;
    int batches = 0;
  };

  struct Job {
    bool ping = false;
    std::size_t session = 0;  ///< find_node only
    PeerIdentity peer;        ///< ping only
    Endpoint to;
    std::string bytes;
  };

  struct InFlight {
    Job job;
    double first_sent = 0;
    bool retransmitted = false;
  };

  struct PingState {
    bool responded = false;
  };

  DatagramTransport& net_;
  CrawlOptions opts_;
  Rng rng_;
  NodeId self_;
  std::uint16_t next_tid_ = 0;
  std::vector<Session> sessions_;
  std::set<PeerIdentity> session_peers_;
  std::set<Endpoint> session_endpoints_;
  std::deque<Job> pending_;
  std::map<std::string, InFlight> in_flight_;
  std::map<PeerIdentity, PingState> pings_;
  std::set<PeerIdentity> learned_;
  std::set<std::pair<PeerIdentity, PeerIdentity>> edges_;
  std::vector<PeerRecord> records_;
  CrawlStats stats_;

  std::string tid() {
    auto t = next_tid_++;
    return std::string{static_cast<char>(t >> 8), static_cast<char>(t & 0xff)};
  }

  void start_session(const Endpoint& ep, std::optional<NodeId> id) {
    if (sessions_.size() >= opts_.budget) return;
    if (id && !session_peers_.insert({ep, *id}).second) return;
    if (!id && !session_endpoints_.insert(ep).second) return;
    sessions_.push_back(Session{ep, id});
    ++stats_.queried_peers;
    queue_find_nodes(sessions_.size() - 1, opts_.initial_queries);
  }

  void queue_find_nodes(std::size_t s, int n) {
    for (int i = 0; i < n; ++i) {
      Job j;
      j.session = s;
      j.to = sessions_[s].ep;
      j.bytes = "";  // filled when sent so each retransmit reuses its tid
      pending_.push_back(std::move(j));
    }
    sessions_[s].outstanding += n;
  }

  void send(Job job) {
    auto t = tid();
    if (job.ping) {
      job.bytes = encode_message(make_ping(t, self_));
      ++stats_.pings_sent;
    } else {
      job.bytes = encode_message(make_find_node(t, self_, NodeId::random(rng_)));
      ++stats_.queries_sent;
    }
    net_.send_to(job.to, job.bytes);
    in_flight_.emplace(t, InFlight{std::move(job), net_.now(), false});
  }

  double next_deadline() const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& [_, f] : in_flight_)
      d = std::min(d, f.first_sent + (f.retransmitted ? opts_.timeout : opts_.retransmit_after));
    return d;
  }

  void loop() {
    while (true) {
      while (in_flight_.size() < opts_.max_in_flight && !pending_.empty()) {
        auto j = std::move(pending_.front());
        pending_.pop_front();
        send(std::move(j));
      }
      if (in_flight_.empty()) break;
      auto dg = net_.receive(next_deadline());
      if (dg) handle(*dg);
      handle_timers();
    }
  }

  void handle_timers() {
    auto now = net_.now();
    std::vector<std::string> expired;
    for (auto& [t, f] : in_flight_) {
      if (!f.retransmitted && now >= f.first_sent + opts_.retransmit_after) {
        f.retransmitted = true;
        net_.send_to(f.job.to, f.job.bytes);
      } else if (f.retransmitted && now >= f.first_sent + opts_.timeout) {
        expired.push_back(t);
      }
    }
    for (const auto& t : expired) {
      auto f = std::move(in_flight_.at(t));
      in_flight_.erase(t);
      if (!f.job.ping) complete(f.job.session);
    }
  }

  void handle(const Datagram& dg) {
    KrpcMessage m;
    try {
      m = decode_message(dg.bytes);
    } catch (const ParseError&) {
      return;
    }
    if (m.kind == KrpcMessage::Kind::Query) {
      // Passive participation: answer, learn nothing.
      auto reply = m.method == "find_node" ? make_find_node_response(m.tid, self_, {}) : make_ping_response(m.tid, self_);
      net_.send_to(dg.from, encode_message(reply));
      return;
    }
    auto it = in_flight_.find(m.tid);
    if (it == in_flight_.end() || it->second.job.to != dg.from) return;
    auto f = std::move(it->second);
    in_flight_.erase(it);
    if (f.job.ping) {
      if (m.kind == KrpcMessage::Kind::Response && m.sender() == f.job.peer.id) {
        pings_[f.job.peer].responded = true;
        start_session(f.job.peer.endpoint, f.job.peer.id);
      }
      return;
    }
    auto& s = sessions_[f.job.session];
    auto sender = m.sender();
    if (m.kind == KrpcMessage::Kind::Response && sender && (!s.id || *s.id == *sender)) {
      if (!s.id) {
        s.id = sender;
        session_peers_.insert({s.ep, *sender});
      }
      s.responded = true;
      std::vector<CompactNodeInfo> nodes;
      if (const auto* n = m.body.contains("nodes") ? &m.body.at("nodes") : nullptr; n && n->is_string()) {
        try {
          nodes = decode_compact_list(n->as_string());
        } catch (const ParseError&) {
          nodes.clear();
        }
      }
      learn(f.job.session, nodes);
    }
    complete(f.job.session);
  }

  void learn(std::size_t si, const std::vector<CompactNodeInfo>& nodes) {
    auto& s = sessions_[si];
    PeerIdentity reporter{s.ep, *s.id};
    for (const auto& n : nodes) {
      PeerIdentity reported{n.endpoint, n.id};
      if (!edges_.insert({reporter, reported}).second) continue;
      records_.push_back(PeerRecord{net_.now(), reporter, reported, false, std::nullopt});
      bool fresh = learned_.insert(reported).second;
      if (is_reserved(n.endpoint.ip)) {
        s.saw_internal = true;
        if (fresh) ++s.new_internal;
      } else if (fresh && n.endpoint.port != 0) {
        pings_.emplace(reported, PingState{});
        Job j;
        j.ping = true;
        j.peer = reported;
        j.to = reported.endpoint;
        pending_.push_back(std::move(j));
      }
    }
  }

  void complete(std::size_t si) {
    auto& s = sessions_[si];
    if (--s.outstanding > 0) return;
    bool more = s.escalated ? s.new_internal > 0 : s.saw_internal;
    if (more && s.batches < opts_.max_batches) {
      s.escalated = true;
      s.new_internal = 0;
      ++s.batches;
      ++stats_.batches;
      queue_find_nodes(si, opts_.batch_size);
      return;
    }
    if (s.responded) ++stats_.responsive_peers;
    else ++stats_.unresponsive_peers;
  }

  CrawlResult finish() {
    for (auto& r : records_) {
      auto p = pings_.find(r.reported);
      r.responded_ping = p != pings_.end() && p->second.responded;
    }
    return CrawlResult{std::move(records_), stats_};
  }
};

inline CrawlResult crawl(DatagramTransport& transport, const std::vector<Endpoint>& bootstrap, CrawlOptions opts) {
  return Crawler(transport, opts).run(bootstrap);
}

}  // namespace cgn::dht
