// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Per-AS summary of probe sessions.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "cgnscope/probe/ports.hpp"
#include "cgnscope/session_record.hpp"
#include "cgnscope/verdict.hpp"

namespace cgn::probe {

inline constexpr std::size_t kMinProfileSessions = 3;
inline constexpr int kMinCgnDistance = 3;

struct AsProfile {
  Asn asn = 0;
  Access access = Access::NonCellular;
  Verdict status = Verdict::Insufficient;  ///< Insufficient or Negative (meaning "profiled")
  std::size_t sessions = 0;
  std::map<PortClass, std::size_t> strategies;
  std::optional<PortClass> dominant;
  std::optional<std::uint32_t> chunk_size;
  std::optional<sim::Pooling> pooling;
  std::optional<double> timeout_mode;
  int max_nat_distance = 0;
  std::optional<StunMapping> most_permissive;
};

/// Most frequent value; ties go to the larger value.
inline std::optional<double> mode_of(const std::vector<double>& xs) {
  std::map<double, std::size_t> freq;
  for (auto x : xs) ++freq[x];
  std::optional<double> best;
  std::size_t count = 0;
  for (const auto& [x, c] : freq)
    if (c >= count) {
      best = x;
      count = c;
    }
  return best;
}

/// Sessions must share one AS and access type. For non-cellular sessions only
/// NATs three or more hops out feed the timeout mode.
inline AsProfile as_profile(const std::vector<SessionRecord>& sessions) {
  AsProfile p;
  if (!sessions.empty()) {
    p.asn = sessions.front().asn;
    p.access = sessions.front().access;
  }
  std::vector<const SessionRecord*> use;
  for (const auto& s : sessions) {
    if (s.asn != p.asn || s.access != p.access) throw InputError("profile sessions must share AS and access type");
    if (!s.exclude) use.push_back(&s);
  }
  p.sessions = use.size();
  if (use.size() < kMinProfileSessions) return p;
  p.status = Verdict::Negative;

  std::vector<std::vector<FlowObservation>> traces;
  std::vector<double> timeouts;
  for (const auto* s : use) {
    if (s->flows.size() >= kTraceLength) {
      ++p.strategies[infer_port_allocation(s->flows)];
      traces.push_back(s->flows);
    }
    if (s->ttl_result && !s->ttl_result->unstable_path && !s->ttl_result->nats.empty()) {
      const auto& deepest = *std::max_element(s->ttl_result->nats.begin(), s->ttl_result->nats.end(),
                                              [](const auto& a, const auto& b) { return a.hop < b.hop; });
      p.max_nat_distance = std::max(p.max_nat_distance, deepest.hop);
      if (p.access == Access::Cellular || deepest.hop >= kMinCgnDistance) timeouts.push_back(deepest.estimate());
    }
    if (s->stun && s->stun->mapping != StunMapping::Open &&
        (!p.most_permissive || s->stun->mapping > *p.most_permissive))
      p.most_permissive = s->stun->mapping;
  }
  std::size_t top = 0;
  for (const auto& [c, n] : p.strategies)
    if (n > top) {
      top = n;
      p.dominant = c;
    }
  p.chunk_size = detect_chunks(traces);
  p.pooling = infer_pooling(traces);
  p.timeout_mode = mode_of(timeouts);
  return p;
}

}  // namespace cgn::probe
