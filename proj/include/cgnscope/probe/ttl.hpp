// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Locating stateful hops and their idle timeouts with TTL-limited
// keepalives.
///
/// For candidate hop j the client keepalives carry TTL j-1 and the server
/// keepalives TTL n-j, so every hop except j keeps seeing traffic. After
/// t_idle seconds the server sends a full-TTL probe; if it no longer reaches
/// the client, hop j dropped the mapping somewhere in [t_idle-10, t_idle).

#pragma once

#include <vector>

#include "cgnscope/error.hpp"
#include "cgnscope/probe/driver.hpp"
#include "cgnscope/session_record.hpp"

namespace cgn::probe {

struct TtlGrid {
  double step = 10;
  double max_idle = 200;
  int max_hops = 32;
};

/// Hops before the server: one less than the smallest TTL that gets through.
inline int baseline_hops(ProbeDriver& d, int max_hops) {
  for (int ttl = 1; ttl <= max_hops + 1; ++ttl)
    if (d.client_send(d.fresh_port(), ttl)) return ttl - 1;
  throw Unreachable("probe server not reachable within " + std::to_string(max_hops + 1) + " hops");
}

/// One reachability experiment; true if the probe still got through.
inline bool reachability_experiment(ProbeDriver& d, int ttl_c, int ttl_s, double idle, double step) {
  auto port = d.fresh_port();
  auto t0 = d.now();
  auto flow = d.open_flow(port);
  if (!flow) throw Unreachable("could not open a flow to the probe server");
  for (double k = step; k < idle; k += step) {
    d.advance_to(t0 + k);
    if (ttl_c > 0) d.client_send(port, ttl_c);
    if (ttl_s > 0) d.server_send(*flow, ttl_s);
  }
  d.advance_to(t0 + idle);
  return d.server_probe(*flow, port);
}

inline TtlResult ttl_enumerate(ProbeDriver& d, const TtlGrid& grid = {}) {
  TtlResult res;
  auto n = baseline_hops(d, grid.max_hops);
  res.path_hops = n;
  {
    auto port = d.fresh_port();
    auto flow = d.open_flow(port);
    if (!flow) throw Unreachable("could not open a flow to the probe server");
    res.address_mismatch = flow->ip != d.local_ip();
  }
  for (int j = 1; j <= n; ++j) {
    for (double t = grid.step; t <= grid.max_idle; t += grid.step) {
      ++res.experiments;
      if (!reachability_experiment(d, j - 1, n - j, t, grid.step)) {
        res.nats.push_back(DetectedNat{j, t - grid.step, t});
        break;
      }
    }
  }
  if (baseline_hops(d, grid.max_hops) != n) {
    res.unstable_path = true;
    res.nats.clear();
  }
  res.stateful_no_nat = !res.nats.empty() && !res.address_mismatch;
  return res;
}

}  // namespace cgn::probe
