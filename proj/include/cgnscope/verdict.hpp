// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Per-AS classification shared by all detectors.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgnscope/addr.hpp"
#include "cgnscope/error.hpp"

namespace cgn {

enum class Method : std::uint8_t { Dht, SessionCellular, SessionNonCellular };
enum class Verdict : std::uint8_t { CgnPositive, Negative, Insufficient };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Dht: return "dht";
    case Method::SessionCellular: return "session-cellular";
    case Method::SessionNonCellular: return "session-noncellular";
  }
  return "?";
}

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::CgnPositive: return "cgn-positive";
    case Verdict::Negative: return "negative";
    case Verdict::Insufficient: return "insufficient";
  }
  return "?";
}

inline std::optional<Verdict> verdict_from_string(std::string_view s) {
  if (s == "cgn-positive") return Verdict::CgnPositive;
  if (s == "negative") return Verdict::Negative;
  if (s == "insufficient") return Verdict::Insufficient;
  return std::nullopt;
}

/// A block of routable space seen on the inside of an AS.
struct RoutableInternal {
  Cidr block;
  bool routed = false;
  friend bool operator==(const RoutableInternal&, const RoutableInternal&) = default;
};

struct AsVerdict {
  Asn asn = 0;
  Method method = Method::Dht;
  Verdict verdict = Verdict::Insufficient;

  // dht evidence: the best cluster
  std::size_t pub_ips = 0;
  std::size_t int_ips = 0;
  std::optional<ReservedRange> range;
  std::size_t queried_peers = 0;

  // session evidence
  std::string cls;  ///< cellular: exclusively-internal / exclusively-public / mixed
  std::size_t sessions = 0;
  std::size_t n = 0;  ///< non-cellular candidate count, or translated sessions for cellular
  std::size_t distinct24 = 0;
  std::map<std::string, std::size_t> category_counts;

  /// Internal ranges observed in this AS, for range usage tables.
  std::vector<ReservedRange> observed_ranges;
  std::vector<RoutableInternal> routable_internal;

  friend bool operator==(const AsVerdict&, const AsVerdict&) = default;
};

}  // namespace cgn
