// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cgnscope/dht/crawler.hpp"
#include "cgnscope/net/udp.hpp"

namespace cgn::dht {

class UdpTransport : public DatagramTransport {
 public:
  explicit UdpTransport(Endpoint local = {}) : sock_(local) {}

  void send_to(const Endpoint& to, std::string_view bytes) override { sock_.send_to(to, bytes); }

  std::optional<Datagram> receive(double deadline) override {
    auto r = sock_.receive(deadline);
    if (!r) return std::nullopt;
    return Datagram{r->first, std::move(r->second)};
  }

  double now() const override { return net::monotonic_seconds(); }

 private:
  net::UdpSocket sock_;
};

}  // namespace cgn::dht
