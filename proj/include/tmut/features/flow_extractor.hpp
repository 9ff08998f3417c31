#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tmut/core/packet.hpp"
#include "tmut/features/config.hpp"
#include "tmut/features/packet_extractor.hpp"

namespace tmut {

inline constexpr double kFlowIdleTimeout = 120.0;
inline constexpr std::size_t kFlowFeatureDims = 26;

inline const std::vector<std::string>& flow_feature_names() {
  static const std::vector<std::string> names = {
      "duration",      "fwd_pkts",      "bwd_pkts",      "fwd_bytes",     "bwd_bytes",     "size_min",
      "size_mean",     "size_max",      "size_std",      "fwd_size_mean", "fwd_size_std",  "bwd_size_mean",
      "bwd_size_std",  "iat_min",       "iat_mean",      "iat_max",       "iat_std",       "fwd_iat_mean",
      "fwd_iat_std",   "bwd_iat_mean",  "bwd_iat_std",   "syn_count",     "ack_count",     "fin_count",
      "rst_count",     "psh_count"};
  return names;
}

struct FlowRecord {
  std::uint32_t src_ip = 0, dst_ip = 0;  // forward direction = first packet's direction
  std::uint16_t src_port = 0, dst_port = 0;
  std::uint64_t proto = 0;
  double start = 0.0, end = 0.0;
  std::size_t fwd_pkts = 0, bwd_pkts = 0;
  std::size_t first_index = 0;
};

namespace flow_detail {

// Running min/mean/max/std over plain samples.
struct Summary {
  std::size_t n = 0;
  double sum = 0.0, sq = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    ++n;
    sum += v;
    sq += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double std() const {
    if (n == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - m * m));
  }
  double min() const { return n ? lo : 0.0; }
  double max() const { return n ? hi : 0.0; }
};

struct FlowState {
  FlowRecord rec;
  Summary size, fwd_size, bwd_size, iat, fwd_iat, bwd_iat;
  double fwd_bytes = 0.0, bwd_bytes = 0.0;
  double last = 0.0, fwd_last = 0.0, bwd_last = 0.0;
  std::size_t syn = 0, ack = 0, fin = 0, rst = 0, psh = 0;

  Vec features() const {
    return {rec.end - rec.start,
            static_cast<double>(rec.fwd_pkts),
            static_cast<double>(rec.bwd_pkts),
            fwd_bytes,
            bwd_bytes,
            size.min(),
            size.mean(),
            size.max(),
            size.std(),
            fwd_size.mean(),
            fwd_size.std(),
            bwd_size.mean(),
            bwd_size.std(),
            iat.min(),
            iat.mean(),
            iat.max(),
            iat.std(),
            fwd_iat.mean(),
            fwd_iat.std(),
            bwd_iat.mean(),
            bwd_iat.std(),
            static_cast<double>(syn),
            static_cast<double>(ack),
            static_cast<double>(fin),
            static_cast<double>(rst),
            static_cast<double>(psh)};
  }
};

using Endpoint = std::pair<std::uint64_t, std::uint64_t>;  // (ip, port) packed with MAC for non-IP frames

inline Endpoint src_end(const Packet& p) {
  return p.ip ? Endpoint{p.src_ip(), p.src_port()} : Endpoint{keys::mac48(p.src_mac), 1ull << 32};
}
inline Endpoint dst_end(const Packet& p) {
  return p.ip ? Endpoint{p.dst_ip(), p.dst_port()} : Endpoint{keys::mac48(p.dst_mac), 1ull << 32};
}

}  // namespace flow_detail

// Bidirectional 5-tuple flows split after 120 s of idleness. Records are
// returned in order of their first packet.
inline std::vector<std::pair<FlowRecord, Vec>> flow_extract(const TrafficTrace& trace) {
  using namespace flow_detail;
  using Key = std::tuple<Endpoint, Endpoint, std::uint64_t>;
  std::vector<FlowState> flows;
  std::map<Key, std::size_t> active;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const Packet& p = trace.packets[i];
    const Endpoint a = src_end(p), b = dst_end(p);
    const std::uint64_t proto = keys::proto_tag(p);
    const Key canon = a < b ? Key{a, b, proto} : Key{b, a, proto};
    auto it = active.find(canon);
    if (it != active.end() && p.timestamp - flows[it->second].last > kFlowIdleTimeout) {
      active.erase(it);
      it = active.end();
    }
    if (it == active.end()) {
      FlowState s;
      s.rec.src_ip = p.src_ip();
      s.rec.dst_ip = p.dst_ip();
      s.rec.src_port = p.src_port();
      s.rec.dst_port = p.dst_port();
      s.rec.proto = proto;
      s.rec.start = s.rec.end = p.timestamp;
      s.rec.first_index = i;
      flows.push_back(std::move(s));
      it = active.emplace(canon, flows.size() - 1).first;
    }
    FlowState& f = flows[it->second];
    const bool first = f.rec.fwd_pkts + f.rec.bwd_pkts == 0;
    const bool fwd = p.src_ip() == f.rec.src_ip && p.src_port() == f.rec.src_port &&
                     (p.ip || src_end(p) == src_end(trace.packets[f.rec.first_index]));
    const double sz = packet_size(p);
    if (!first) f.iat.add(p.timestamp - f.last);
    f.size.add(sz);
    if (fwd) {
      if (f.rec.fwd_pkts) f.fwd_iat.add(p.timestamp - f.fwd_last);
      ++f.rec.fwd_pkts;
      f.fwd_bytes += sz;
      f.fwd_size.add(sz);
      f.fwd_last = p.timestamp;
    } else {
      if (f.rec.bwd_pkts) f.bwd_iat.add(p.timestamp - f.bwd_last);
      ++f.rec.bwd_pkts;
      f.bwd_bytes += sz;
      f.bwd_size.add(sz);
      f.bwd_last = p.timestamp;
    }
    f.last = p.timestamp;
    f.rec.end = p.timestamp;
    if (p.tcp) {
      const auto fl = p.tcp->flags;
      f.syn += (fl & tcp_flags::kSyn) != 0;
      f.ack += (fl & tcp_flags::kAck) != 0;
      f.fin += (fl & tcp_flags::kFin) != 0;
      f.rst += (fl & tcp_flags::kRst) != 0;
      f.psh += (fl & tcp_flags::kPsh) != 0;
    }
  }

  std::vector<std::pair<FlowRecord, Vec>> out;
  out.reserve(flows.size());
  for (const auto& f : flows) out.emplace_back(f.rec, f.features());
  return out;
}

}  // namespace tmut
