// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Coverage and penetration tables over AS populations, per-region
// breakdown and internal range usage.

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"
#include "cgnscope/verdict.hpp"

namespace cgn::report {

enum class EyeballSource : std::uint8_t { PblLike, ApnicLike };

inline constexpr std::uint64_t kPblMinAddresses = 2048;
inline constexpr std::uint64_t kApnicMinSamples = 1000;

struct Population {
  std::string name;
  std::set<Asn> asns;
};

/// `asn` or `asn,weight` per line. Eyeball lists keep only ASes meeting
/// their source's weight threshold; a plain population keeps every line.
inline Population read_population(std::istream& in, std::string name, std::optional<EyeballSource> eyeball = {}) {
  Population p{std::move(name), {}};
  cgn::detail::for_each_csv_line(in, [&](std::size_t, const std::vector<std::string_view>& f) {
    if (f.empty() || f.size() > 2) throw ParseError("expected 'asn' or 'asn,weight'");
    auto asn = cgn::detail::parse_int<Asn>(f[0], "asn");
    std::uint64_t weight = 0;
    if (f.size() == 2) weight = cgn::detail::parse_int<std::uint64_t>(f[1], "weight");
    if (eyeball) {
      if (f.size() != 2) throw ParseError("eyeball lists need 'asn,weight'");
      auto min = *eyeball == EyeballSource::PblLike ? kPblMinAddresses : kApnicMinSamples;
      if (weight < min) return;
    }
    p.asns.insert(asn);
  });
  return p;
}

/// Percentage rounded to one decimal; zero when the denominator is zero.
inline double percent(std::size_t num, std::size_t den) {
  if (den == 0) return 0;
  return std::round(static_cast<double>(num) * 1000.0 / static_cast<double>(den)) / 10.0;
}

struct MethodRow {
  std::string method;
  std::size_t covered = 0;
  std::size_t positive = 0;
  double covered_pct = 0;      ///< of the population
  double positive_pct = 0;     ///< of covered ASes
  double positive_pop_pct = 0; ///< of the population
  friend bool operator==(const MethodRow&, const MethodRow&) = default;
};

struct PopulationTable {
  std::string population;
  std::size_t size = 0;
  std::vector<MethodRow> rows;  ///< dht, session-noncellular, union, session-cellular
  friend bool operator==(const PopulationTable&, const PopulationTable&) = default;
};

struct RegionRow {
  Region region = Region::Unknown;
  std::size_t ases = 0;
  std::size_t covered = 0;
  double coverage_pct = 0;
  std::size_t noncellular_covered = 0, noncellular_positive = 0;
  double noncellular_pct = 0;
  std::size_t cellular_covered = 0, cellular_positive = 0;
  double cellular_pct = 0;
  friend bool operator==(const RegionRow&, const RegionRow&) = default;
};

struct RangeUsage {
  Asn asn = 0;
  std::vector<ReservedRange> ranges;
  std::vector<RoutableInternal> routable;
  bool multi_range() const { return ranges.size() + routable.size() > 1; }
  friend bool operator==(const RangeUsage&, const RangeUsage&) = default;
};

struct Report {
  int schema = 1;
  std::string routing_source;
  std::vector<PopulationTable> tables;
  std::string region_population;
  std::vector<RegionRow> regions;
  std::vector<RangeUsage> ranges;
  std::vector<std::string> notes;
  friend bool operator==(const Report&, const Report&) = default;
};

/// Verdicts indexed by method then AS. Exact duplicates collapse; two
/// different verdicts for one (AS, method) are an input error.
class VerdictIndex {
 public:
  explicit VerdictIndex(const std::vector<AsVerdict>& all) {
    for (const auto& v : all) {
      auto [it, fresh] = by_[v.method].emplace(v.asn, v);
      if (!fresh && it->second.verdict != v.verdict)
        throw InputError("conflicting " + to_string(v.method) + " verdicts for AS" + std::to_string(v.asn));
    }
  }

  const AsVerdict* find(Method m, Asn asn) const {
    auto mi = by_.find(m);
    if (mi == by_.end()) return nullptr;
    auto it = mi->second.find(asn);
    return it == mi->second.end() ? nullptr : &it->second;
  }
  bool covered(Method m, Asn asn) const {
    const auto* v = find(m, asn);
    return v && v->verdict != Verdict::Insufficient;
  }
  bool positive(Method m, Asn asn) const {
    const auto* v = find(m, asn);
    return v && v->verdict == Verdict::CgnPositive;
  }
  const std::map<Method, std::map<Asn, AsVerdict>>& all() const { return by_; }

 private:
  std::map<Method, std::map<Asn, AsVerdict>> by_;
};

inline MethodRow make_row(std::string name, std::size_t covered, std::size_t positive, std::size_t size) {
  return MethodRow{std::move(name), covered, positive, percent(covered, size), percent(positive, covered),
                   percent(positive, size)};
}

inline PopulationTable population_table(const VerdictIndex& idx, const Population& pop) {
  std::size_t dc = 0, dp = 0, nc = 0, np = 0, uc = 0, up = 0, cc = 0, cp = 0;
  for (auto asn : pop.asns) {
    bool d_cov = idx.covered(Method::Dht, asn), n_cov = idx.covered(Method::SessionNonCellular, asn);
    bool d_pos = idx.positive(Method::Dht, asn), n_pos = idx.positive(Method::SessionNonCellular, asn);
    dc += d_cov;
    dp += d_pos;
    nc += n_cov;
    np += n_pos;
    uc += d_cov || n_cov;
    up += d_pos || n_pos;
    cc += idx.covered(Method::SessionCellular, asn);
    cp += idx.positive(Method::SessionCellular, asn);
  }
  auto n = pop.asns.size();
  return PopulationTable{pop.name, n,
                         {make_row("dht", dc, dp, n), make_row("session-noncellular", nc, np, n),
                          make_row("union", uc, up, n), make_row("session-cellular", cc, cp, n)}};
}

/// Coverage counts any method; non-cellular penetration uses the union of
/// DHT and non-cellular sessions.
inline std::vector<RegionRow> region_breakdown(const VerdictIndex& idx, const Population& pop, const RirMap& rir) {
  std::map<Region, RegionRow> rows;
  for (auto asn : pop.asns) {
    auto r = region_of(asn, rir);
    auto& row = rows[r];
    row.region = r;
    ++row.ases;
    bool nc_cov = idx.covered(Method::Dht, asn) || idx.covered(Method::SessionNonCellular, asn);
    bool nc_pos = idx.positive(Method::Dht, asn) || idx.positive(Method::SessionNonCellular, asn);
    bool c_cov = idx.covered(Method::SessionCellular, asn);
    row.covered += nc_cov || c_cov;
    row.noncellular_covered += nc_cov;
    row.noncellular_positive += nc_pos;
    row.cellular_covered += c_cov;
    row.cellular_positive += idx.positive(Method::SessionCellular, asn);
  }
  std::vector<RegionRow> out;
  for (auto& [_, row] : rows) {
    row.coverage_pct = percent(row.covered, row.ases);
    row.noncellular_pct = percent(row.noncellular_positive, row.noncellular_covered);
    row.cellular_pct = percent(row.cellular_positive, row.cellular_covered);
    out.push_back(row);
  }
  return out;
}

/// Ranges seen inside each AS across every method's evidence.
inline std::vector<RangeUsage> range_usage(const VerdictIndex& idx) {
  std::map<Asn, RangeUsage> by_as;
  for (const auto& [_, m] : idx.all())
    for (const auto& [asn, v] : m) {
      if (v.observed_ranges.empty() && v.routable_internal.empty()) continue;
      auto& u = by_as[asn];
      u.asn = asn;
      for (auto r : v.observed_ranges)
        if (std::find(u.ranges.begin(), u.ranges.end(), r) == u.ranges.end()) u.ranges.push_back(r);
      for (const auto& r : v.routable_internal)
        if (std::find(u.routable.begin(), u.routable.end(), r) == u.routable.end()) u.routable.push_back(r);
    }
  std::vector<RangeUsage> out;
  for (auto& [_, u] : by_as) {
    std::sort(u.ranges.begin(), u.ranges.end());
    std::sort(u.routable.begin(), u.routable.end(), [](const auto& a, const auto& b) { return a.block < b.block; });
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<RangeUsage> range_usage(const std::vector<AsVerdict>& verdicts) {
  return range_usage(VerdictIndex(verdicts));
}

/// Populations in order (routed, then eyeball lists). The region table uses
/// the first eyeball population, or the first population if none is marked.
inline Report aggregate(const std::vector<AsVerdict>& verdicts, const std::vector<Population>& populations,
                        const RirMap& rir = {}, std::size_t region_population = 0, std::string routing_source = {}) {
  VerdictIndex idx(verdicts);
  Report rep;
  rep.routing_source = std::move(routing_source);
  for (const auto& p : populations) rep.tables.push_back(population_table(idx, p));
  if (region_population < populations.size()) {
    rep.region_population = populations[region_population].name;
    rep.regions = region_breakdown(idx, populations[region_population], rir);
  }
  rep.ranges = range_usage(idx);
  rep.notes.push_back("an AS is covered by a method when that method's verdict is not insufficient");
  rep.notes.push_back("positive_pct is relative to covered ASes; positive_pop_pct to the whole population");
  return rep;
}

}  // namespace cgn::report
