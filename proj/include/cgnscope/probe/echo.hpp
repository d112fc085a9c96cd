// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Echo protocol: `ECHO <nonce>\n` answered by `<nonce> <ip> <port>\n`.

#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "cgnscope/addr.hpp"

namespace cgn::probe {

inline std::string echo_request(std::string_view nonce) { return "ECHO " + std::string(nonce) + "\n"; }

/// Nonce of a well-formed request, else nullopt.
inline std::optional<std::string> parse_echo_request(std::string_view msg) {
  if (!msg.starts_with("ECHO ") || !msg.ends_with('\n')) return std::nullopt;
  auto nonce = msg.substr(5, msg.size() - 6);
  if (nonce.empty() || nonce.find_first_of(" \n") != std::string_view::npos) return std::nullopt;
  return std::string(nonce);
}

inline std::string echo_reply(std::string_view nonce, const Endpoint& observed) {
  return std::string(nonce) + ' ' + observed.ip.to_string() + ' ' + std::to_string(observed.port) + '\n';
}

/// Server side: the reply for `request` arriving from `observed`.
inline std::optional<std::string> echo_respond(std::string_view request, const Endpoint& observed) {
  auto nonce = parse_echo_request(request);
  if (!nonce) return std::nullopt;
  return echo_reply(*nonce, observed);
}

/// Observed endpoint if `reply` answers `nonce`.
inline std::optional<Endpoint> parse_echo_reply(std::string_view reply, std::string_view nonce) {
  if (!reply.ends_with('\n')) return std::nullopt;
  std::istringstream in{std::string(reply)};
  std::string n, ip;
  unsigned port = 0;
  if (!(in >> n >> ip >> port) || n != nonce || port > 65535) return std::nullopt;
  auto addr = Ipv4::try_parse(ip);
  if (!addr) return std::nullopt;
  return Endpoint{*addr, static_cast<std::uint16_t>(port)};
}

}  // namespace cgn::probe
