// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Classic mapping-type discovery. All tests share one local port.

#pragma once

#include "cgnscope/error.hpp"
#include "cgnscope/probe/driver.hpp"
#include "cgnscope/probe/stun.hpp"
#include "cgnscope/rng.hpp"
#include "cgnscope/session_record.hpp"

namespace cgn::probe {

namespace detail {

inline std::optional<stun::Message> binding(ProbeDriver& d, Rng& rng, std::uint16_t port, const Endpoint& dst,
                                            std::uint32_t flags) {
  auto tid = stun::random_tid(rng);
  auto reply = d.stun_exchange(port, dst, stun::encode(stun::binding_request(tid, flags)));
  if (!reply) return std::nullopt;
  try {
    auto m = stun::decode(*reply);
    if (m.type != stun::kBindingResponse || m.tid != tid || !m.reflexive()) return std::nullopt;
    return m;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Test order: I, II (change IP and port), I towards the alternate IP, then
/// III (change port). Test II runs before the alternate-IP test so that the
/// latter cannot open the filter for it.
inline StunOutcome stun_classify(ProbeDriver& d, std::uint64_t seed = 1) {
  Rng rng(seed);
  auto srv = d.stun_server();
  auto port = d.fresh_port();
  StunOutcome out;

  auto t1 = detail::binding(d, rng, port, srv.primary, 0);
  if (!t1) throw Unreachable("no answer to the STUN binding request");
  out.test1 = true;
  out.mapped = *t1->reflexive();
  if (out.mapped == Endpoint{d.local_ip(), port}) {
    out.mapping = StunMapping::Open;
    return out;
  }

  out.test2 = detail::binding(d, rng, port, srv.primary, stun::kChangeIp | stun::kChangePort).has_value();
  if (*out.test2) {
    out.mapping = StunMapping::FullCone;
    return out;
  }

  auto t1b = detail::binding(d, rng, port, Endpoint{srv.alternate.ip, srv.primary.port}, 0);
  if (t1b) {
    out.same_mapping = *t1b->reflexive() == out.mapped;
    if (!*out.same_mapping) {
      out.mapping = StunMapping::Symmetric;
      return out;
    }
  }

  out.test3 = detail::binding(d, rng, port, srv.primary, stun::kChangePort).has_value();
  out.mapping = *out.test3 ? StunMapping::AddressRestricted : StunMapping::PortRestricted;
  return out;
}

}  // namespace cgn::probe
