// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Plain-text rendering of a report.

#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include "cgnscope/report/aggregate.hpp"

namespace cgn::report {

namespace detail {

inline std::string fmt_pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%5.1f%%", v);
  return buf;
}

inline std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace detail

inline void render_text(std::ostream& out, const Report& r) {
  using detail::fmt_pct;
  using detail::pad;
  if (!r.routing_source.empty()) out << "routing table: " << r.routing_source << "\n";
  for (const auto& t : r.tables) {
    out << "\n" << t.population << " (" << t.size << " ASes)\n";
    out << "  " << pad("method", 22) << pad("covered", 16) << pad("positive", 16) << "of population\n";
    for (const auto& m : t.rows)
      out << "  " << pad(m.method, 22) << pad(std::to_string(m.covered) + " " + fmt_pct(m.covered_pct), 16)
          << pad(std::to_string(m.positive) + " " + fmt_pct(m.positive_pct), 16) << fmt_pct(m.positive_pop_pct)
          << "\n";
  }
  if (!r.regions.empty()) {
    out << "\nregions (" << r.region_population << ")\n";
    out << "  " << pad("region", 9) << pad("ASes", 7) << pad("covered", 16) << pad("non-cellular", 18) << "cellular\n";
    for (const auto& g : r.regions)
      out << "  " << pad(to_string(g.region), 9) << pad(std::to_string(g.ases), 7)
          << pad(std::to_string(g.covered) + " " + fmt_pct(g.coverage_pct), 16)
          << pad(std::to_string(g.noncellular_positive) + "/" + std::to_string(g.noncellular_covered) + " " +
                     fmt_pct(g.noncellular_pct),
                 18)
          << std::to_string(g.cellular_positive) << "/" << g.cellular_covered << " " << fmt_pct(g.cellular_pct) << "\n";
  }
  if (!r.ranges.empty()) {
    std::size_t multi = 0;
    for (const auto& u : r.ranges) multi += u.multi_range();
    out << "\ninternal ranges (" << r.ranges.size() << " ASes, " << multi << " with more than one)\n";
    for (const auto& u : r.ranges) {
      out << "  AS" << u.asn;
      for (auto x : u.ranges) out << " " << to_string(x);
      for (const auto& x : u.routable) out << " " << x.block.to_string() << (x.routed ? "(routed)" : "(unrouted)");
      out << "\n";
    }
  }
  for (const auto& n : r.notes) out << "\nnote: " << n;
  if (!r.notes.empty()) out << "\n";
}

}  // namespace cgn::report
