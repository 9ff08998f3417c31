#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmut/core/craft.hpp"
#include "tmut/core/packet.hpp"

namespace tmut {

enum class MaliciousKind { kScan, kFlood };

inline std::string to_string(MaliciousKind k) { return k == MaliciousKind::kScan ? "SCAN" : "FLOOD"; }

inline MaliciousKind malicious_kind_from_string(const std::string& s) {
  if (s == "SCAN") return MaliciousKind::kScan;
  if (s == "FLOOD") return MaliciousKind::kFlood;
  throw std::invalid_argument("unknown malicious kind: " + s);
}

// Rates are packets per second: per flow for benign traffic, for the whole
// attacker stream otherwise. `ports` only matters for SCAN (0 = one per packet).
struct SynthSpec {
  std::size_t packets = 2000;
  std::size_t flows = 10;
  double rate_min = 2.0;
  double rate_max = 20.0;
  std::size_t ports = 0;
  double start_time = 1'700'000'000.0;

  void validate() const {
    if (packets < 1) throw std::invalid_argument("synth: packets must be >= 1");
    if (flows < 1) throw std::invalid_argument("synth: flows must be >= 1");
    if (!(rate_min > 0.0) || !(rate_max >= rate_min)) throw std::invalid_argument("synth: need 0 < rate_min <= rate_max");
    if (!(start_time >= 0.0) || start_time > 4e9) throw std::invalid_argument("synth: start_time out of pcap range");
  }
};

inline SynthSpec default_benign_spec() { return {}; }

inline SynthSpec default_malicious_spec(MaliciousKind k) {
  SynthSpec s;
  s.packets = 500;
  s.flows = 1;
  if (k == MaliciousKind::kScan) {
    s.rate_min = 20.0;
    s.rate_max = 60.0;
  } else {
    s.rate_min = 5000.0;
    s.rate_max = 10000.0;
  }
  return s;
}

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"packets", s.packets}, {"flows", s.flows},   {"rate_min", s.rate_min},
          {"rate_max", s.rate_max}, {"ports", s.ports}, {"start_time", s.start_time}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec s) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "packets") s.packets = it->get<std::size_t>();
    else if (k == "flows") s.flows = it->get<std::size_t>();
    else if (k == "rate_min") s.rate_min = it->get<double>();
    else if (k == "rate_max") s.rate_max = it->get<double>();
    else if (k == "ports") s.ports = it->get<std::size_t>();
    else if (k == "start_time") s.start_time = it->get<double>();
    else if (k != "kind") throw std::invalid_argument("synth spec: unknown key '" + k + "'");
  }
  return s;
}

namespace synth_detail {

// Timestamps are whole microseconds so pcap round trips are exact.
inline double micros_to_time(std::int64_t us) {
  return static_cast<double>(us / 1'000'000) + static_cast<double>(us % 1'000'000) * 1e-6;
}

inline std::int64_t to_micros(double t) { return std::llround(t * 1e6); }

inline std::int64_t jittered_gap_us(double rate, Rng& rng) {
  const double base = 1e6 / rate;
  const double g = base * std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  return std::max<std::int64_t>(1, std::llround(g));
}

inline void stamp(Packet& p, std::int64_t us, std::uint8_t ttl) {
  p.timestamp = micros_to_time(us);
  p.ip->ttl = ttl;
  p.src_mac = mac_for_ip(p.ip->src);
  p.dst_mac = mac_for_ip(p.ip->dst);
}

struct Event {
  std::int64_t us;
  std::size_t flow;
  std::size_t index;  // packet number within the flow
};

}  // namespace synth_detail

// Client-server sessions over mixed TCP/UDP. A session is a run of short
// connections between one client and one server, each on a fresh source port
// (browsing, DNS lookups), with jittered inter-arrivals.
inline TrafficTrace synth_benign(const SynthSpec& spec, Rng& rng) {
  using namespace synth_detail;
  spec.validate();
  static constexpr std::array<std::uint16_t, 5> kTcpPorts{80, 443, 22, 8080, 993};
  static constexpr std::array<std::uint16_t, 3> kUdpPorts{53, 123, 5353};

  struct Flow {
    bool tcp;
    std::uint32_t client, server;
    std::uint16_t dport;
    double rate;
  };
  std::vector<Flow> flows;
  double total_rate = 0.0;
  for (std::size_t f = 0; f < spec.flows; ++f) {
    Flow fl{};
    fl.tcp = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.7;
    fl.client = make_ip(192, 168, 1, static_cast<std::uint8_t>(10 + f % 200));
    fl.server = make_ip(10, 0, 0, static_cast<std::uint8_t>(1 + std::uniform_int_distribution<int>(0, 19)(rng)));
    fl.dport = fl.tcp ? kTcpPorts[std::uniform_int_distribution<std::size_t>(0, kTcpPorts.size() - 1)(rng)]
                      : kUdpPorts[std::uniform_int_distribution<std::size_t>(0, kUdpPorts.size() - 1)(rng)];
    fl.rate = std::uniform_real_distribution<double>(spec.rate_min, spec.rate_max)(rng);
    total_rate += fl.rate;
    flows.push_back(fl);
  }

  // Each flow emits enough events to cover the horizon; the earliest
  // `packets` events across all flows are kept.
  const double horizon = static_cast<double>(spec.packets) / total_rate;
  const std::int64_t t0 = to_micros(spec.start_time);
  std::vector<Event> events;
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const auto n = static_cast<std::size_t>(std::ceil(flows[f].rate * horizon * 2.0)) + 4;
    std::int64_t us = t0 + std::uniform_int_distribution<std::int64_t>(0, std::llround(1e6 / flows[f].rate))(rng);
    for (std::size_t i = 0; i < n; ++i) {
      events.push_back({us, f, i});
      us += jittered_gap_us(flows[f].rate, rng);
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.us != b.us ? a.us < b.us : a.flow < b.flow;
  });
  events.resize(std::min(events.size(), spec.packets));

  struct Conn {
    std::uint16_t sport = 0;
    std::size_t left = 0, index = 0;
    std::uint32_t seq_c = 0, seq_s = 0;
  };
  std::vector<Conn> conns(flows.size());
  TrafficTrace t;
  t.packets.reserve(events.size());
  for (const auto& e : events) {
    Flow& fl = flows[e.flow];
    Conn& cn = conns[e.flow];
    if (cn.left == 0) {
      cn.sport = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(1024, 65535)(rng));
      cn.left = fl.tcp ? std::uniform_int_distribution<std::size_t>(3, 40)(rng)
                       : std::uniform_int_distribution<std::size_t>(1, 3)(rng) * 2;
      cn.index = 0;
      cn.seq_c = std::uniform_int_distribution<std::uint32_t>()(rng);
      cn.seq_s = std::uniform_int_distribution<std::uint32_t>()(rng);
    }
    const std::size_t idx = cn.index++;
    --cn.left;
    const bool from_client = idx % 2 == 0;
    const std::uint32_t src = from_client ? fl.client : fl.server;
    const std::uint32_t dst = from_client ? fl.server : fl.client;
    const std::uint16_t sp = from_client ? cn.sport : fl.dport;
    const std::uint16_t dp = from_client ? fl.dport : cn.sport;
    Packet p;
    if (fl.tcp) {
      std::uint8_t flags = tcp_flags::kAck;
      std::size_t len = 0;
      if (idx == 0) flags = tcp_flags::kSyn;
      else if (idx == 1) flags = tcp_flags::kSyn | tcp_flags::kAck;
      else if (idx > 2) {
        len = std::uniform_int_distribution<std::size_t>(0, from_client ? 400 : 1200)(rng);
        if (len) flags |= tcp_flags::kPsh;
      }
      std::uint32_t& seq = from_client ? cn.seq_c : cn.seq_s;
      const std::uint32_t ack = from_client ? cn.seq_s : cn.seq_c;
      p = make_tcp_packet(0.0, src, dst, sp, dp, flags, seq, idx == 0 ? 0 : ack, len);
      seq += static_cast<std::uint32_t>(len) + (idx < 2 ? 1u : 0u);
    } else {
      p = make_udp_packet(0.0, src, dst, sp, dp,
                          std::uniform_int_distribution<std::size_t>(from_client ? 20 : 60, from_client ? 80 : 300)(rng));
    }
    for (auto& b : p.payload) b = static_cast<std::uint8_t>(rng());
    stamp(p, e.us, from_client ? 64 : 128);
    t.packets.push_back(std::move(p));
  }
  return t;
}

// SCAN: SYN probes from one source to many ports of one host.
// FLOOD: identical UDP datagrams to one destination at a high rate.
inline TrafficTrace synth_malicious(MaliciousKind kind, const SynthSpec& spec, Rng& rng) {
  using namespace synth_detail;
  spec.validate();
  const std::uint32_t attacker = make_ip(172, 16, 0, 66);
  const std::uint32_t victim = make_ip(10, 0, 0, 5);
  std::int64_t us = to_micros(spec.start_time);
  TrafficTrace t;
  t.packets.reserve(spec.packets);

  std::vector<std::uint16_t> ports;
  if (kind == MaliciousKind::kScan) {
    const std::size_t n_ports = std::clamp<std::size_t>(spec.ports ? spec.ports : spec.packets, 1, 65535);
    ports.resize(n_ports);
    std::iota(ports.begin(), ports.end(), std::uint16_t{1});
    std::shuffle(ports.begin(), ports.end(), rng);
  }
  const std::uint16_t flood_sport = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(1024, 65535)(rng));
  for (std::size_t i = 0; i < spec.packets; ++i) {
    const double rate = std::uniform_real_distribution<double>(spec.rate_min, spec.rate_max)(rng);
    if (i > 0) us += jittered_gap_us(rate, rng);
    Packet p;
    if (kind == MaliciousKind::kScan) {
      const auto sport = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(32768, 60999)(rng));
      p = make_tcp_packet(0.0, attacker, victim, sport, ports[i % ports.size()], tcp_flags::kSyn,
                          std::uniform_int_distribution<std::uint32_t>()(rng), 0, 0);
    } else {
      p = make_udp_packet(0.0, attacker, victim, flood_sport, 80, 512);
    }
    stamp(p, us, 64);
    t.packets.push_back(std::move(p));
  }
  return t;
}

inline double mean_interarrival(const TrafficTrace& t) {
  return t.size() < 2 ? 0.0 : t.elapsed() / static_cast<double>(t.size() - 1);
}

}  // namespace tmut
