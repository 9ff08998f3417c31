#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "tmut/core/packet.hpp"
#include "tmut/features/config.hpp"
#include "tmut/features/damped_stat.hpp"

namespace tmut {

// Size used by every size statistic: on-wire length when the capture was
// truncated, serialized frame length otherwise.
inline double packet_size(const Packet& p) {
  return p.wire_length ? static_cast<double>(*p.wire_length) : static_cast<double>(p.frame_len());
}

inline bool is_syn(const Packet& p) { return p.tcp && (p.tcp->flags & tcp_flags::kSyn); }

struct StreamKey {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  bool operator==(const StreamKey&) const = default;
};

struct StreamKeyHash {
  std::size_t operator()(const StreamKey& k) const noexcept {
    std::uint64_t h = k.a * 0x9e3779b97f4a7c15ull;
    h ^= k.b + 0x7f4a7c159e3779b9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

namespace keys {

inline std::uint64_t mac48(const MacAddr& m) {
  std::uint64_t v = 0;
  for (auto b : m) v = (v << 8) | b;
  return v;
}
inline StreamKey src_mac_ip(const Packet& p) { return {mac48(p.src_mac), p.src_ip()}; }
inline StreamKey src_ip(const Packet& p) { return {p.src_ip(), 0}; }
inline StreamKey channel(const Packet& p) { return {(std::uint64_t{p.src_ip()} << 32) | p.dst_ip(), 0}; }
inline StreamKey channel_rev(const Packet& p) { return {(std::uint64_t{p.dst_ip()} << 32) | p.src_ip(), 0}; }
inline std::uint64_t proto_tag(const Packet& p) { return p.ip ? p.ip->proto : 0x100u + (p.ethertype & 0xff); }
inline StreamKey socket(const Packet& p) {
  return {(std::uint64_t{p.src_ip()} << 32) | p.dst_ip(),
          (std::uint64_t{p.src_port()} << 32) | (std::uint64_t{p.dst_port()} << 16) | proto_tag(p)};
}
inline StreamKey socket_rev(const Packet& p) {
  return {(std::uint64_t{p.dst_ip()} << 32) | p.src_ip(),
          (std::uint64_t{p.dst_port()} << 32) | (std::uint64_t{p.src_port()} << 16) | proto_tag(p)};
}

}  // namespace keys

// Damped-window packet extractor. For every lambda, in this order:
//   srcMAC-IP size {w, mean, std}, srcIP size {w, mean, std},
//   channel size {w, mean, std, magnitude, radius}, channel jitter {w, mean, std},
//   socket size {w, mean, std, magnitude, radius}
// followed, per pool lambda, by the host-level pool block:
//   {w, bytes, size mean, size std, iat mean, iat std, SYN ratio}.
// Magnitude is sqrt(mu_a^2 + mu_b^2) and radius sqrt(var_a^2 + var_b^2), with b
// the reverse direction of the same channel or socket.
// Copying an extractor forks its state.
class PacketExtractor {
 public:
  explicit PacketExtractor(ExtractorConfig cfg) : cfg_(std::move(cfg)), sel_(cfg_.selected()) {
    if (cfg_.known_mask.size() != cfg_.universe_dims())
      throw DimensionMismatch("extractor: mask does not cover the feature universe");
    nl_ = cfg_.lambdas.size();
    np_ = cfg_.pool_lambdas.size();
  }

  const ExtractorConfig& config() const { return cfg_; }
  std::size_t dims() const { return sel_.size(); }

  // Full universe vector for one packet; packets must arrive in time order.
  Vec process_universe(const Packet& p) {
    const double t = p.timestamp;
    const double v = packet_size(p);
    Vec out(cfg_.universe_dims(), 0.0);

    auto& mi = stats_for(mi_, keys::src_mac_ip(p), cfg_.lambdas);
    auto& host = stats_for(host_, keys::src_ip(p), cfg_.lambdas);
    auto& ch = stats_for(ch_, keys::channel(p), cfg_.lambdas);
    auto& sk = stats_for(sk_, keys::socket(p), cfg_.lambdas);
    auto& jit = jitter_for(keys::channel(p));
    const StreamStats* ch_rev = find(ch_, keys::channel_rev(p));
    const StreamStats* sk_rev = find(sk_, keys::socket_rev(p));
    if (jit.seen && t < jit.last_t - kTimeRegressionTolerance) throw TimeRegression("extractor: time went backwards");
    const double iat = jit.seen ? std::max(0.0, t - jit.last_t) : 0.0;

    for (std::size_t l = 0; l < nl_; ++l) {
      double* o = out.data() + l * kTargetFeaturesPerLambda;
      mi.s[l].update(t, v);
      host.s[l].update(t, v);
      ch.s[l].update(t, v);
      sk.s[l].update(t, v);
      jit.s[l].update(t, iat);
      put3(o, mi.s[l]);
      put3(o + 3, host.s[l]);
      put3(o + 6, ch.s[l]);
      put2d(o + 9, ch.s[l], ch_rev ? &ch_rev->s[l] : nullptr);
      put3(o + 11, jit.s[l]);
      put3(o + 14, sk.s[l]);
      put2d(o + 17, sk.s[l], sk_rev ? &sk_rev->s[l] : nullptr);
    }
    jit.seen = true;
    jit.last_t = t;

    auto& pool = pool_for(keys::src_ip(p));
    const double piat = pool.seen ? std::max(0.0, t - pool.last_t) : 0.0;
    const double syn = is_syn(p) ? 1.0 : 0.0;
    for (std::size_t l = 0; l < np_; ++l) {
      double* o = out.data() + cfg_.target_dims() + l * kPoolFeaturesPerLambda;
      pool.size[l].update(t, v);
      pool.iat[l].update(t, piat);
      pool.syn[l].update(t, syn);
      o[0] = pool.size[l].w;
      o[1] = pool.size[l].ls;
      o[2] = pool.size[l].mean();
      o[3] = pool.size[l].stddev();
      o[4] = pool.iat[l].mean();
      o[5] = pool.iat[l].stddev();
      o[6] = pool.syn[l].mean();
    }
    pool.seen = true;
    pool.last_t = t;
    return out;
  }

  Vec process(const Packet& p) { return select(process_universe(p)); }

  Vec select(const Vec& universe) const {
    Vec out(sel_.size());
    for (std::size_t i = 0; i < sel_.size(); ++i) out[i] = universe[sel_[i]];
    return out;
  }

  Matrix process_all(const TrafficTrace& trace) {
    Matrix m;
    m.reserve(trace.size());
    for (const auto& p : trace.packets) m.push_back(process(p));
    return m;
  }

 private:
  struct StreamStats {
    std::vector<DampedStat> s;
  };
  struct JitterStats {
    std::vector<DampedStat> s;
    double last_t = 0.0;
    bool seen = false;
  };
  struct PoolStats {
    std::vector<DampedStat> size, iat, syn;
    double last_t = 0.0;
    bool seen = false;
  };
  using StatMap = std::unordered_map<StreamKey, StreamStats, StreamKeyHash>;

  static std::vector<DampedStat> fresh(const Vec& lambdas) {
    std::vector<DampedStat> v;
    v.reserve(lambdas.size());
    for (double l : lambdas) v.emplace_back(l);
    return v;
  }

  static StreamStats& stats_for(StatMap& m, const StreamKey& k, const Vec& lambdas) {
    auto it = m.find(k);
    if (it == m.end()) it = m.emplace(k, StreamStats{fresh(lambdas)}).first;
    return it->second;
  }
  static const StreamStats* find(const StatMap& m, const StreamKey& k) {
    auto it = m.find(k);
    return it == m.end() ? nullptr : &it->second;
  }
  JitterStats& jitter_for(const StreamKey& k) {
    auto it = jit_.find(k);
    if (it == jit_.end()) it = jit_.emplace(k, JitterStats{fresh(cfg_.lambdas)}).first;
    return it->second;
  }
  PoolStats& pool_for(const StreamKey& k) {
    auto it = pool_.find(k);
    if (it == pool_.end())
      it = pool_.emplace(k, PoolStats{fresh(cfg_.pool_lambdas), fresh(cfg_.pool_lambdas), fresh(cfg_.pool_lambdas)}).first;
    return it->second;
  }

  static void put3(double* o, const DampedStat& s) {
    o[0] = s.w;
    o[1] = s.mean();
    o[2] = s.stddev();
  }
  static void put2d(double* o, const DampedStat& a, const DampedStat* b) {
    const double mb = b ? b->mean() : 0.0;
    const double vb = b ? b->variance() : 0.0;
    const double va = a.variance();
    o[0] = std::sqrt(a.mean() * a.mean() + mb * mb);
    o[1] = std::sqrt(va * va + vb * vb);
  }

  ExtractorConfig cfg_;
  std::vector<std::size_t> sel_;
  std::size_t nl_ = 0, np_ = 0;
  StatMap mi_, host_, ch_, sk_;
  std::unordered_map<StreamKey, JitterStats, StreamKeyHash> jit_;
  std::unordered_map<StreamKey, PoolStats, StreamKeyHash> pool_;
};

inline Matrix packet_extract_trace(const ExtractorConfig& cfg, const TrafficTrace& trace) {
  PacketExtractor ex(cfg);
  return ex.process_all(trace);
}

}  // namespace tmut
