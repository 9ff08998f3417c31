#pragma once

#include <cstdint>
#include <random>

#include "tmut/core/packet.hpp"

namespace tmut::testing {

// Random mixed-protocol trace; timestamps land on whole microseconds so a
// pcap round trip is exact.
inline TrafficTrace random_trace(std::mt19937_64& rng, std::size_t n, bool with_other = true) {
  std::uniform_int_distribution<int> proto(0, with_other ? 3 : 2);
  std::uniform_int_distribution<int> host(1, 6);
  std::uniform_int_distribution<int> port(1024, 1030);
  std::uniform_int_distribution<int> len(0, 300);
  std::uniform_int_distribution<int> gap_us(0, 200000);
  std::uniform_int_distribution<std::uint32_t> word;
  std::uniform_int_distribution<int> byte(0, 255);
  TrafficTrace t;
  std::int64_t us = 1'600'000'000LL * 1'000'000LL + gap_us(rng);
  for (std::size_t i = 0; i < n; ++i) {
    us += gap_us(rng);
    const double ts = static_cast<double>(us / 1'000'000) + static_cast<double>(us % 1'000'000) * 1e-6;
    const std::uint32_t src = make_ip(10, 0, 0, static_cast<std::uint8_t>(host(rng)));
    const std::uint32_t dst = make_ip(10, 0, 1, static_cast<std::uint8_t>(host(rng)));
    const auto plen = static_cast<std::size_t>(len(rng));
    Packet p;
    switch (proto(rng)) {
      case 0:
        p = make_tcp_packet(ts, src, dst, static_cast<std::uint16_t>(port(rng)), 80,
                            static_cast<std::uint8_t>(tcp_flags::kAck | (word(rng) & 1 ? tcp_flags::kPsh : 0)),
                            word(rng), word(rng), plen);
        p.ip->ttl = static_cast<std::uint8_t>(2 + byte(rng) % 200);
        break;
      case 1:
        p = make_udp_packet(ts, src, dst, static_cast<std::uint16_t>(port(rng)), 53, plen);
        break;
      case 2:
        p = make_icmp_packet(ts, src, dst, 8, 0, plen);
        p.icmp->rest = word(rng);
        break;
      default:
        p.timestamp = ts;
        p.protocol = Protocol::kOther;
        p.ethertype = 0x0806;
        p.payload.assign(28 + plen % 20, 0);
        break;
    }
    for (auto& b : p.payload) b = static_cast<std::uint8_t>(byte(rng));
    p.src_mac = mac_for_ip(src);
    p.dst_mac = mac_for_ip(dst);
    t.packets.push_back(std::move(p));
  }
  return t;
}

}  // namespace tmut::testing
