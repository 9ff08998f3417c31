#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "tmut/core/packet.hpp"

namespace tmut {

using Rng = std::mt19937_64;

// Sequence-space distance treated as "outside any plausible receive window".
// Larger than the unscaled 64 KiB window so moderately scaled windows are
// also avoided.
inline constexpr std::uint32_t kSeqGuard = 1u << 20;

// ICMP types marked deprecated by RFC 6918 (plus 30, traceroute).
inline constexpr std::array<std::uint8_t, 15> kDeprecatedIcmpTypes = {4,  6,  15, 16, 17, 18, 30, 31,
                                                                       32, 33, 34, 35, 36, 37, 39};

inline bool is_deprecated_icmp_type(std::uint8_t type) {
  return std::find(kDeprecatedIcmpTypes.begin(), kDeprecatedIcmpTypes.end(), type) !=
         kDeprecatedIcmpTypes.end();
}

struct CraftRecipe {
  CraftKind kind = CraftKind::kUdpPad;
  // TTL_TRICK only: hops between attacker and victim minus one; the crafted
  // packet expires before reaching the victim.
  std::uint8_t ttl_trick_ttl = 1;
};

// Which anchors a recipe may be attached to. ICMP recipes produce a
// standalone ICMP packet between the anchor's hosts, so any IPv4 anchor works.
inline bool recipe_applicable(CraftKind kind, const Packet& anchor) {
  switch (kind) {
    case CraftKind::kTtlTrick:
      return anchor.ip.has_value() && anchor.protocol != Protocol::kOther && anchor.ip->ttl > 1;
    case CraftKind::kTcpResyn:
    case CraftKind::kTcpBadSeq:
    case CraftKind::kTcpBadAck:
      return anchor.protocol == Protocol::kTcp;
    case CraftKind::kUdpPad:
      return anchor.protocol == Protocol::kUdp;
    case CraftKind::kIcmpPad:
    case CraftKind::kIcmpDeprecated:
      return anchor.ip.has_value();
    case CraftKind::kDuplicate:
      return true;
  }
  return false;
}

// Signed distance a - b in 32-bit sequence space.
inline std::int64_t seq_diff(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::int32_t>(a - b);
}

namespace craft_detail {

inline std::vector<std::uint8_t> random_bytes(std::size_t n, Rng& rng) {
  std::vector<std::uint8_t> out(n);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& b : out) b = static_cast<std::uint8_t>(byte(rng));
  return out;
}

inline Packet skeleton(const Packet& anchor, CraftKind kind, Rng& rng) {
  Packet p;
  p.timestamp = anchor.timestamp;
  p.src_mac = anchor.src_mac;
  p.dst_mac = anchor.dst_mac;
  p.ethertype = anchor.ethertype;
  Ipv4Header ip;
  ip.src = anchor.ip->src;
  ip.dst = anchor.ip->dst;
  ip.ttl = anchor.ip->ttl;
  ip.tos = anchor.ip->tos;
  ip.id = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, 0xffff)(rng));
  p.ip = ip;
  p.provenance = Provenance::kCrafted;
  p.recipe = kind;
  return p;
}

// True when [seq, seq+len) overlaps [start, start+kSeqGuard).
inline bool overlaps_window(std::uint32_t seq, std::size_t len, std::uint32_t start) {
  const std::int64_t lo = seq_diff(seq, start);
  const std::int64_t hi = lo + static_cast<std::int64_t>(len);
  return hi > 0 && lo < static_cast<std::int64_t>(kSeqGuard);
}

}  // namespace craft_detail

// Builds one crafted packet sharing the anchor's MAC/IP (and port) identity.
inline Packet craft_packet(const CraftRecipe& recipe, const Packet& anchor, std::uint32_t payload_size,
                           Rng& rng) {
  using namespace craft_detail;
  if (!recipe_applicable(recipe.kind, anchor))
    throw InapplicableRecipe(std::string("recipe ") + to_string(recipe.kind) + " not applicable to " +
                             to_string(anchor.protocol) + " anchor");
  payload_size = std::min(payload_size, kMaxCraftPayload);

  if (recipe.kind == CraftKind::kDuplicate) {
    Packet p = anchor;
    p.provenance = Provenance::kCrafted;
    p.recipe = CraftKind::kDuplicate;
    return p;
  }

  Packet p = skeleton(anchor, recipe.kind, rng);
  std::uniform_int_distribution<std::uint32_t> delta(1, 1u << 16);
  switch (recipe.kind) {
    case CraftKind::kTtlTrick: {
      p.protocol = anchor.protocol;
      p.ip->proto = anchor.ip->proto;
      p.tcp = anchor.tcp;
      p.udp = anchor.udp;
      p.icmp = anchor.icmp;
      if (p.tcp) p.tcp->checksum.reset();
      if (p.udp) p.udp->checksum.reset();
      if (p.icmp) p.icmp->checksum.reset();
      p.ip->ttl = std::min<std::uint8_t>(recipe.ttl_trick_ttl, static_cast<std::uint8_t>(anchor.ip->ttl - 1));
      p.payload = random_bytes(payload_size, rng);
      break;
    }
    case CraftKind::kTcpResyn: {
      const auto& a = *anchor.tcp;
      const bool anchor_syn = (a.flags & tcp_flags::kSyn) && !(a.flags & tcp_flags::kAck);
      p.protocol = Protocol::kTcp;
      p.ip->proto = 6;
      // Repeats the connection's initial sequence number; no data.
      p.tcp = TcpHeader{.src_port = a.src_port,
                        .dst_port = a.dst_port,
                        .seq = anchor_syn ? a.seq : a.seq - 1,
                        .ack = 0,
                        .flags = tcp_flags::kSyn,
                        .window = a.window};
      break;
    }
    case CraftKind::kTcpBadSeq: {
      const auto& a = *anchor.tcp;
      p.protocol = Protocol::kTcp;
      p.ip->proto = 6;
      p.payload = random_bytes(payload_size, rng);
      const bool below = std::bernoulli_distribution(0.5)(rng);
      const std::uint32_t len = payload_size;
      const std::uint32_t seq = below ? a.seq - len - delta(rng) : a.seq + kSeqGuard + delta(rng);
      p.tcp = TcpHeader{.src_port = a.src_port,
                        .dst_port = a.dst_port,
                        .seq = seq,
                        .ack = a.ack,
                        .flags = static_cast<std::uint8_t>(tcp_flags::kAck | (len ? tcp_flags::kPsh : 0)),
                        .window = a.window};
      break;
    }
    case CraftKind::kTcpBadAck: {
      const auto& a = *anchor.tcp;
      p.protocol = Protocol::kTcp;
      p.ip->proto = 6;
      p.payload = random_bytes(payload_size, rng);
      const bool below = std::bernoulli_distribution(0.5)(rng);
      const std::uint32_t ack = below ? a.ack - kSeqGuard - delta(rng) : a.ack + kSeqGuard + delta(rng);
      // Any data rides on already-acknowledged sequence space.
      p.tcp = TcpHeader{.src_port = a.src_port,
                        .dst_port = a.dst_port,
                        .seq = a.seq - payload_size,
                        .ack = ack,
                        .flags = tcp_flags::kAck,
                        .window = a.window};
      break;
    }
    case CraftKind::kUdpPad: {
      p.protocol = Protocol::kUdp;
      p.ip->proto = 17;
      p.udp = UdpHeader{.src_port = anchor.udp->src_port, .dst_port = anchor.udp->dst_port};
      p.payload = random_bytes(payload_size, rng);
      break;
    }
    case CraftKind::kIcmpPad: {
      // Unsolicited echo reply: never answered.
      p.protocol = Protocol::kIcmp;
      p.ip->proto = 1;
      p.icmp = IcmpHeader{.type = 0, .code = 0, .rest = static_cast<std::uint32_t>(rng())};
      p.payload = random_bytes(payload_size, rng);
      break;
    }
    case CraftKind::kIcmpDeprecated: {
      p.protocol = Protocol::kIcmp;
      p.ip->proto = 1;
      std::uniform_int_distribution<std::size_t> pick(0, kDeprecatedIcmpTypes.size() - 1);
      p.icmp = IcmpHeader{.type = kDeprecatedIcmpTypes[pick(rng)], .code = 0, .rest = 0};
      p.payload = random_bytes(payload_size, rng);
      break;
    }
    case CraftKind::kDuplicate:
      break;
  }
  return p;
}

// Structural audit of a crafted packet against the anchor it precedes.
inline bool satisfies_recipe(const Packet& crafted, const Packet& anchor) {
  using namespace craft_detail;
  if (crafted.provenance != Provenance::kCrafted || !crafted.recipe) return false;
  const CraftKind kind = *crafted.recipe;
  if (!recipe_applicable(kind, anchor) || !crafted.valid()) return false;
  if (crafted.timestamp > anchor.timestamp) return false;
  if (kind == CraftKind::kDuplicate) return crafted.same_content(anchor);

  if (crafted.src_mac != anchor.src_mac || crafted.dst_mac != anchor.dst_mac) return false;
  if (!crafted.ip || crafted.ip->src != anchor.ip->src || crafted.ip->dst != anchor.ip->dst) return false;
  if (crafted.payload.size() > kMaxCraftPayload) return false;
  const bool same_ports = crafted.src_port() == anchor.src_port() && crafted.dst_port() == anchor.dst_port();

  switch (kind) {
    case CraftKind::kTtlTrick:
      return crafted.protocol == anchor.protocol && same_ports && crafted.ip->ttl < anchor.ip->ttl;
    case CraftKind::kTcpResyn:
      return crafted.protocol == Protocol::kTcp && same_ports && crafted.tcp->flags == tcp_flags::kSyn &&
             crafted.payload.empty();
    case CraftKind::kTcpBadSeq: {
      if (crafted.protocol != Protocol::kTcp || !same_ports) return false;
      const auto& t = *crafted.tcp;
      if (t.flags & (tcp_flags::kSyn | tcp_flags::kRst | tcp_flags::kFin)) return false;
      return !overlaps_window(t.seq, crafted.payload.size(), anchor.tcp->seq) &&
             (seq_diff(t.seq, anchor.tcp->seq) < 0 ||
              seq_diff(t.seq, anchor.tcp->seq) >= static_cast<std::int64_t>(kSeqGuard));
    }
    case CraftKind::kTcpBadAck: {
      if (crafted.protocol != Protocol::kTcp || !same_ports) return false;
      const auto& t = *crafted.tcp;
      if (t.flags & (tcp_flags::kSyn | tcp_flags::kRst | tcp_flags::kFin)) return false;
      const std::int64_t d = seq_diff(t.ack, anchor.tcp->ack);
      return (d > static_cast<std::int64_t>(kSeqGuard) || d < -static_cast<std::int64_t>(kSeqGuard)) &&
             !overlaps_window(t.seq, crafted.payload.size(), anchor.tcp->seq);
    }
    case CraftKind::kUdpPad:
      return crafted.protocol == Protocol::kUdp && same_ports;
    case CraftKind::kIcmpPad:
      return crafted.protocol == Protocol::kIcmp && crafted.icmp->type == 0 && crafted.icmp->code == 0;
    case CraftKind::kIcmpDeprecated:
      return crafted.protocol == Protocol::kIcmp && is_deprecated_icmp_type(crafted.icmp->type);
    case CraftKind::kDuplicate:
      break;
  }
  return false;
}

// Recipes the rebuild may pick for an anchor at the given protocol depth
// (3 = network-layer craft, 4 = transport-layer craft in the anchor's flow).
inline std::vector<CraftKind> candidate_recipes(const Packet& anchor, int protocol_layers, bool allow_ttl_trick) {
  std::vector<CraftKind> out;
  if (!anchor.ip) return out;
  if (protocol_layers >= 4) {
    switch (anchor.protocol) {
      case Protocol::kTcp:
        out = {CraftKind::kTcpResyn, CraftKind::kTcpBadSeq, CraftKind::kTcpBadAck};
        break;
      case Protocol::kUdp:
        out = {CraftKind::kUdpPad};
        break;
      case Protocol::kIcmp:
        out = {CraftKind::kIcmpPad};
        break;
      case Protocol::kOther:
        break;
    }
  }
  if (out.empty()) out = {CraftKind::kIcmpPad, CraftKind::kIcmpDeprecated};
  if (allow_ttl_trick && recipe_applicable(CraftKind::kTtlTrick, anchor)) out.push_back(CraftKind::kTtlTrick);
  return out;
}

}  // namespace tmut
