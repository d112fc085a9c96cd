// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Address heuristics over measurement sessions: the cellular rule
// and the non-cellular CPE-filter plus /24-diversity rule.

#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/session_record.hpp"
#include "cgnscope/verdict.hpp"

namespace cgn::detect {

inline constexpr std::size_t kCellularMinSessions = 5;
inline constexpr std::size_t kNonCellularMinSessions = 10;
inline constexpr std::size_t kTopCpeBlocks = 10;
// distinct /24s must reach 4/10 of the candidate count
inline constexpr std::size_t kDiversityNum = 4;
inline constexpr std::size_t kDiversityDen = 10;

inline std::string category_name(const AddrCategory& c) {
  switch (c.kind) {
    case AddrKind::Private: return "private-" + to_string(*c.range);
    case AddrKind::Unrouted: return "unrouted";
    case AddrKind::RoutedMatch: return "routed-match";
    case AddrKind::RoutedMismatch: return "routed-mismatch";
  }
  return "?";
}

namespace detail {

inline std::vector<const SessionRecord*> usable(const std::vector<SessionRecord>& sessions, Access want) {
  std::vector<const SessionRecord*> out;
  std::optional<Asn> asn;
  for (const auto& s : sessions) {
    if (s.access != want) throw InputError("session " + s.session_id + " has access type " + to_string(s.access));
    if (asn && *asn != s.asn) throw InputError("sessions from more than one AS");
    asn = s.asn;
    if (!s.exclude) out.push_back(&s);
  }
  return out;
}

inline void note_address(AsVerdict& v, Ipv4 a, const AddrCategory& c, const RoutingTable& table) {
  if (c.kind == AddrKind::Private) {
    if (std::find(v.observed_ranges.begin(), v.observed_ranges.end(), *c.range) == v.observed_ranges.end())
      v.observed_ranges.push_back(*c.range);
  } else if (c.kind == AddrKind::Unrouted || c.kind == AddrKind::RoutedMismatch) {
    RoutableInternal r{Cidr{a, 8}, table.match(a).has_value()};
    if (std::find(v.routable_internal.begin(), v.routable_internal.end(), r) == v.routable_internal.end())
      v.routable_internal.push_back(r);
  }
}

}  // namespace detail

/// All sessions must be cellular and from one AS.
inline AsVerdict classify_cellular(const std::vector<SessionRecord>& sessions, const RoutingTable& table) {
  auto use = detail::usable(sessions, Access::Cellular);
  AsVerdict v;
  v.method = Method::SessionCellular;
  if (!sessions.empty()) v.asn = sessions.front().asn;
  v.sessions = use.size();
  if (use.size() < kCellularMinSessions) {
    v.verdict = Verdict::Insufficient;
    return v;
  }
  std::size_t translated = 0;
  for (const auto* s : use) {
    auto c = classify_observed(s->ip_dev, s->ip_pub, table);
    ++v.category_counts[category_name(c)];
    if (c.kind != AddrKind::RoutedMatch) ++translated;
    detail::note_address(v, s->ip_dev, c, table);
  }
  std::sort(v.observed_ranges.begin(), v.observed_ranges.end());
  v.n = translated;
  v.cls = translated == use.size() ? "exclusively-internal" : translated == 0 ? "exclusively-public" : "mixed";
  v.verdict = translated > 0 ? Verdict::CgnPositive : Verdict::Negative;
  return v;
}

struct CpeBlocks {
  std::vector<Cidr> blocks;  ///< most frequent first
  double coverage = 0;       ///< share of ip_dev values inside `blocks`
  bool contains(Ipv4 a) const {
    return std::find(blocks.begin(), blocks.end(), Cidr{a, 24}) != blocks.end();
  }
};

/// The ten most common ip_dev /24s across the non-cellular corpus.
inline CpeBlocks compute_cpe_top_blocks(const std::vector<SessionRecord>& sessions) {
  std::map<Cidr, std::size_t> freq;
  std::size_t total = 0;
  for (const auto& s : sessions) {
    if (s.access != Access::NonCellular || s.exclude) continue;
    ++freq[Cidr{s.ip_dev, 24}];
    ++total;
  }
  if (total == 0) throw InputError("no non-cellular sessions to derive CPE blocks from");
  std::vector<std::pair<Cidr, std::size_t>> ranked(freq.begin(), freq.end());
  // map order already puts lower prefixes first, so a stable sort keeps that tie-break
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  CpeBlocks out;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < ranked.size() && i < kTopCpeBlocks; ++i) {
    out.blocks.push_back(ranked[i].first);
    covered += ranked[i].second;
  }
  out.coverage = static_cast<double>(covered) / static_cast<double>(total);
  return out;
}

/// All sessions must be non-cellular and from one AS.
inline AsVerdict classify_noncellular(const std::vector<SessionRecord>& sessions, const CpeBlocks& top,
                                      const RoutingTable& table) {
  auto use = detail::usable(sessions, Access::NonCellular);
  AsVerdict v;
  v.method = Method::SessionNonCellular;
  if (!sessions.empty()) v.asn = sessions.front().asn;
  v.sessions = use.size();
  if (use.size() < kNonCellularMinSessions) {
    v.verdict = Verdict::Insufficient;
    return v;
  }
  std::set<Cidr> blocks;
  for (const auto* s : use) {
    if (!s->ip_cpe) continue;
    auto c = classify_observed(*s->ip_cpe, s->ip_pub, table);
    ++v.category_counts[category_name(c)];
    if (c.kind == AddrKind::RoutedMatch || top.contains(*s->ip_cpe)) continue;
    ++v.n;
    blocks.insert(Cidr{*s->ip_cpe, 24});
    detail::note_address(v, *s->ip_cpe, c, table);
  }
  std::sort(v.observed_ranges.begin(), v.observed_ranges.end());
  v.distinct24 = blocks.size();
  bool positive = v.n >= kNonCellularMinSessions && v.distinct24 * kDiversityDen >= kDiversityNum * v.n;
  v.verdict = positive ? Verdict::CgnPositive : Verdict::Negative;
  return v;
}

/// Splits a mixed corpus by (AS, access) and classifies each group.
inline std::vector<AsVerdict> detect_sessions(const std::vector<SessionRecord>& sessions, const RoutingTable& table) {
  std::map<std::pair<Asn, Access>, std::vector<SessionRecord>> groups;
  for (const auto& s : sessions) groups[{s.asn, s.access}].push_back(s);
  std::optional<CpeBlocks> top;
  for (const auto& s : sessions)
    if (s.access == Access::NonCellular && !s.exclude) {
      top = compute_cpe_top_blocks(sessions);
      break;
    }
  std::vector<AsVerdict> out;
  for (const auto& [key, group] : groups) {
    if (key.second == Access::Cellular) out.push_back(classify_cellular(group, table));
    else if (top) out.push_back(classify_noncellular(group, *top, table));
    else out.push_back(classify_noncellular(group, CpeBlocks{}, table));
  }
  return out;
}

}  // namespace cgn::detect
