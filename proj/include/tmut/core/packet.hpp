#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmut {

using MacAddr = std::array<std::uint8_t, 6>;

enum class Protocol : std::uint8_t { kTcp, kUdp, kIcmp, kOther };
enum class Provenance : std::uint8_t { kOriginal, kCrafted };

// Crafted-packet recipes. kDuplicate marks verbatim copies emitted by the
// Random-Dup baseline; it is not selectable by the meta-info rebuild.
enum class CraftKind : std::uint8_t {
  kTtlTrick,
  kTcpResyn,
  kTcpBadSeq,
  kTcpBadAck,
  kUdpPad,
  kIcmpPad,
  kIcmpDeprecated,
  kDuplicate,
};

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
}  // namespace tcp_flags

inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::size_t kEthernetHeaderLen = 14;
inline constexpr std::size_t kIpv4HeaderLen = 20;
inline constexpr std::size_t kTcpHeaderLen = 20;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kIcmpHeaderLen = 8;
inline constexpr std::uint32_t kMaxCraftPayload = 1460;

struct TrafficError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedPcap : TrafficError {
  using TrafficError::TrafficError;
};
struct EmptyTrace : TrafficError {
  using TrafficError::TrafficError;
};
struct LayoutMismatch : TrafficError {
  using TrafficError::TrafficError;
};
struct BudgetViolation : TrafficError {
  using TrafficError::TrafficError;
};
struct InapplicableRecipe : TrafficError {
  using TrafficError::TrafficError;
};

struct Ipv4Header {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint8_t ttl = 64;
  std::uint8_t tos = 0;
  std::uint8_t proto = 0;
  std::uint16_t id = 0;
  std::uint16_t flags_frag = 0x4000;  // DF
  std::vector<std::uint8_t> options;
  std::optional<std::uint16_t> checksum;  // recomputed on write when absent
  bool operator==(const Ipv4Header&) const = default;
};

struct TcpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::uint16_t window = 65535;
  std::uint16_t urgent = 0;
  std::vector<std::uint8_t> options;
  std::optional<std::uint16_t> checksum;
  bool operator==(const TcpHeader&) const = default;
};

struct UdpHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::optional<std::uint16_t> checksum;
  bool operator==(const UdpHeader&) const = default;
};

struct IcmpHeader {
  std::uint8_t type = 0;
  std::uint8_t code = 0;
  std::uint32_t rest = 0;  // identifier/sequence or unused word
  std::optional<std::uint16_t> checksum;
  bool operator==(const IcmpHeader&) const = default;
};

// One captured frame. Header presence follows the protocol tag: tcp/udp/icmp
// are engaged only for the matching protocol, ip only for IPv4 frames.
struct Packet {
  double timestamp = 0.0;
  MacAddr src_mac{};
  MacAddr dst_mac{};
  std::uint16_t ethertype = kEtherTypeIpv4;
  Protocol protocol = Protocol::kOther;
  std::optional<Ipv4Header> ip;
  std::optional<TcpHeader> tcp;
  std::optional<UdpHeader> udp;
  std::optional<IcmpHeader> icmp;
  std::vector<std::uint8_t> payload;
  // Link-layer padding after the IP datagram (short frames).
  std::vector<std::uint8_t> trailer;
  // Original on-wire length when the capture truncated the frame.
  std::optional<std::uint32_t> wire_length;
  Provenance provenance = Provenance::kOriginal;
  std::optional<CraftKind> recipe;

  std::uint32_t payload_len() const { return static_cast<std::uint32_t>(payload.size()); }

  std::size_t transport_header_len() const {
    if (tcp) return kTcpHeaderLen + tcp->options.size();
    if (udp) return kUdpHeaderLen;
    if (icmp) return kIcmpHeaderLen;
    return 0;
  }

  std::size_t ip_header_len() const { return ip ? kIpv4HeaderLen + ip->options.size() : 0; }

  // Ethernet frame length as it would be serialized.
  std::size_t frame_len() const {
    return kEthernetHeaderLen + ip_header_len() + transport_header_len() + payload.size() + trailer.size();
  }

  std::uint16_t src_port() const {
    if (tcp) return tcp->src_port;
    if (udp) return udp->src_port;
    return 0;
  }
  std::uint16_t dst_port() const {
    if (tcp) return tcp->dst_port;
    if (udp) return udp->dst_port;
    return 0;
  }
  std::uint32_t src_ip() const { return ip ? ip->src : 0; }
  std::uint32_t dst_ip() const { return ip ? ip->dst : 0; }

  // Everything except timestamp, provenance and recipe tag.
  bool same_content(const Packet& o) const {
    return src_mac == o.src_mac && dst_mac == o.dst_mac && ethertype == o.ethertype &&
           protocol == o.protocol && ip == o.ip && tcp == o.tcp && udp == o.udp && icmp == o.icmp &&
           payload == o.payload && trailer == o.trailer && wire_length == o.wire_length;
  }

  bool operator==(const Packet&) const = default;

  bool valid() const {
    if (!(timestamp >= 0.0) || !std::isfinite(timestamp)) return false;
    switch (protocol) {
      case Protocol::kTcp:
        return ip && tcp && !udp && !icmp;
      case Protocol::kUdp:
        return ip && udp && !tcp && !icmp;
      case Protocol::kIcmp:
        return ip && icmp && !tcp && !udp;
      case Protocol::kOther:
        return !tcp && !udp && !icmp;
    }
    return false;
  }
};

// Capture-file parameters carried so a parsed trace re-serializes verbatim.
struct CaptureFormat {
  bool big_endian = false;
  bool nanosecond = false;
  std::uint16_t version_major = 2;
  std::uint16_t version_minor = 4;
  std::int32_t thiszone = 0;
  std::uint32_t sigfigs = 0;
  std::uint32_t snaplen = 65535;
  std::uint32_t linktype = 1;
  bool operator==(const CaptureFormat&) const = default;
};

struct TrafficTrace {
  std::vector<Packet> packets;
  CaptureFormat format;

  bool empty() const { return packets.empty(); }
  std::size_t size() const { return packets.size(); }

  double elapsed() const {
    if (packets.empty()) return 0.0;
    return packets.back().timestamp - packets.front().timestamp;
  }

  bool timestamps_sorted() const {
    for (std::size_t i = 1; i < packets.size(); ++i)
      if (packets[i].timestamp < packets[i - 1].timestamp) return false;
    return true;
  }

  std::size_t count(Provenance p) const {
    std::size_t n = 0;
    for (const auto& pkt : packets) n += pkt.provenance == p;
    return n;
  }

  std::size_t total_bytes() const {
    std::size_t n = 0;
    for (const auto& pkt : packets) n += pkt.frame_len();
    return n;
  }
};

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kTcp: return "TCP";
    case Protocol::kUdp: return "UDP";
    case Protocol::kIcmp: return "ICMP";
    case Protocol::kOther: return "OTHER";
  }
  return "?";
}

inline const char* to_string(CraftKind k) {
  switch (k) {
    case CraftKind::kTtlTrick: return "TTL_TRICK";
    case CraftKind::kTcpResyn: return "TCP_RESYN";
    case CraftKind::kTcpBadSeq: return "TCP_BAD_SEQ";
    case CraftKind::kTcpBadAck: return "TCP_BAD_ACK";
    case CraftKind::kUdpPad: return "UDP_PAD";
    case CraftKind::kIcmpPad: return "ICMP_PAD";
    case CraftKind::kIcmpDeprecated: return "ICMP_DEPRECATED";
    case CraftKind::kDuplicate: return "DUPLICATE";
  }
  return "?";
}

inline std::string ip_to_string(std::uint32_t ip) {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline std::uint32_t make_ip(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  return (std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d;
}

// Builders used by generators and tests.
inline Packet make_tcp_packet(double ts, std::uint32_t src, std::uint32_t dst, std::uint16_t sport,
                              std::uint16_t dport, std::uint8_t flags, std::uint32_t seq,
                              std::uint32_t ack, std::size_t payload_len) {
  Packet p;
  p.timestamp = ts;
  p.protocol = Protocol::kTcp;
  p.ip = Ipv4Header{.src = src, .dst = dst, .proto = 6};
  p.tcp = TcpHeader{.src_port = sport, .dst_port = dport, .seq = seq, .ack = ack, .flags = flags};
  p.payload.assign(payload_len, 0);
  return p;
}

inline Packet make_udp_packet(double ts, std::uint32_t src, std::uint32_t dst, std::uint16_t sport,
                              std::uint16_t dport, std::size_t payload_len) {
  Packet p;
  p.timestamp = ts;
  p.protocol = Protocol::kUdp;
  p.ip = Ipv4Header{.src = src, .dst = dst, .proto = 17};
  p.udp = UdpHeader{.src_port = sport, .dst_port = dport};
  p.payload.assign(payload_len, 0);
  return p;
}

inline Packet make_icmp_packet(double ts, std::uint32_t src, std::uint32_t dst, std::uint8_t type,
                               std::uint8_t code, std::size_t payload_len) {
  Packet p;
  p.timestamp = ts;
  p.protocol = Protocol::kIcmp;
  p.ip = Ipv4Header{.src = src, .dst = dst, .proto = 1};
  p.icmp = IcmpHeader{.type = type, .code = code};
  p.payload.assign(payload_len, 0);
  return p;
}

// Stable MAC derived from an IPv4 address (02:00 locally administered prefix).
inline MacAddr mac_for_ip(std::uint32_t ip) {
  return {0x02, 0x00, static_cast<std::uint8_t>(ip >> 24), static_cast<std::uint8_t>(ip >> 16),
          static_cast<std::uint8_t>(ip >> 8), static_cast<std::uint8_t>(ip)};
}

}  // namespace tmut
