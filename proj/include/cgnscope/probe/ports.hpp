// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Port allocation, chunk and pooling inference from echo flows.

#pragma once

#include <algorithm>
#include <bit>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cgnscope/error.hpp"
#include "cgnscope/natsim/nat.hpp"
#include "cgnscope/probe/driver.hpp"
#include "cgnscope/probe/echo.hpp"
#include "cgnscope/session_record.hpp"

namespace cgn::probe {

inline constexpr std::size_t kTraceLength = 10;
inline constexpr std::size_t kMinChunkSessions = 20;
inline constexpr std::uint32_t kMaxChunkSpan = 16384;
inline constexpr int kSequentialMaxGap = 50;

enum class PortClass : std::uint8_t { Preserved, Sequential, Random };

inline std::string to_string(PortClass c) {
  switch (c) {
    case PortClass::Preserved: return "preserved";
    case PortClass::Sequential: return "sequential";
    case PortClass::Random: return "random";
  }
  return "?";
}

/// Opens `n` flows from fresh ports and records what the echo server saw.
/// Flows without an answer are skipped.
inline std::vector<FlowObservation> collect_port_trace(ProbeDriver& d, Proto proto = Proto::Tcp,
                                                       std::size_t n = kTraceLength) {
  std::vector<FlowObservation> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto port = d.fresh_port();
    auto nonce = "n" + std::to_string(port) + "-" + std::to_string(i);
    auto reply = d.echo_exchange(proto, port, echo_request(nonce));
    if (!reply) continue;
    auto seen = parse_echo_reply(*reply, nonce);
    if (!seen) continue;
    out.push_back(FlowObservation{port, seen->ip, seen->port, static_cast<int>(i)});
  }
  return out;
}

/// Evaluated in a fixed order: preserved, then sequential, then random.
/// Only the first ten flows count.
inline PortClass infer_port_allocation(const std::vector<FlowObservation>& trace) {
  if (trace.size() < kTraceLength)
    throw InputError("port trace needs " + std::to_string(kTraceLength) + " flows, got " + std::to_string(trace.size()));
  std::size_t preserved = 0;
  for (std::size_t i = 0; i < kTraceLength; ++i) preserved += trace[i].local_port == trace[i].observed_port;
  if (preserved * 5 >= kTraceLength) return PortClass::Preserved;  // at least 20%
  bool sequential = true;
  for (std::size_t i = 1; i < kTraceLength && sequential; ++i) {
    int d = int{trace[i].observed_port} - int{trace[i - 1].observed_port};
    sequential = d > 0 && d < kSequentialMaxGap;
  }
  return sequential ? PortClass::Sequential : PortClass::Random;
}

/// Ports covered by the session on each external IP, max over IPs.
inline std::uint32_t trace_span(const std::vector<FlowObservation>& trace) {
  std::map<Ipv4, std::pair<std::uint16_t, std::uint16_t>> range;
  for (const auto& f : trace) {
    auto [it, fresh] = range.try_emplace(f.observed_ip, f.observed_port, f.observed_port);
    if (!fresh) {
      it->second.first = std::min(it->second.first, f.observed_port);
      it->second.second = std::max(it->second.second, f.observed_port);
    }
  }
  std::uint32_t span = 0;
  for (const auto& [_, r] : range) span = std::max<std::uint32_t>(span, r.second - r.first + 1u);
  return span;
}

/// Chunk size if every random-classified session stays inside a window
/// narrower than 16K ports. Needs 20 such sessions.
inline std::optional<std::uint32_t> detect_chunks(const std::vector<std::vector<FlowObservation>>& sessions) {
  std::size_t used = 0;
  std::uint32_t widest = 0;
  for (const auto& s : sessions) {
    if (s.size() < kTraceLength || infer_port_allocation(s) != PortClass::Random) continue;
    ++used;
    auto span = trace_span(s);
    if (span >= kMaxChunkSpan) return std::nullopt;
    widest = std::max(widest, span);
  }
  if (used < kMinChunkSessions) return std::nullopt;
  return std::bit_ceil(widest);
}

inline constexpr std::size_t kMinPoolingSessions = 5;

/// Arbitrary when more than 60% of sessions saw more than one external IP.
inline std::optional<sim::Pooling> infer_pooling(const std::vector<std::vector<FlowObservation>>& sessions) {
  std::size_t used = 0, multi = 0;
  for (const auto& s : sessions) {
    if (s.size() < 2) continue;
    ++used;
    std::set<Ipv4> ips;
    for (const auto& f : s) ips.insert(f.observed_ip);
    multi += ips.size() > 1;
  }
  if (used < kMinPoolingSessions) return std::nullopt;
  return multi * 10 > used * 6 ? sim::Pooling::Arbitrary : sim::Pooling::Paired;
}

}  // namespace cgn::probe
