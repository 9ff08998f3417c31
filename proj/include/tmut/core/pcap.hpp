#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "tmut/core/packet.hpp"

namespace tmut {

namespace pcap_detail {

inline constexpr std::uint32_t kMagicMicro = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicNano = 0xa1b23c4d;
inline constexpr std::size_t kGlobalHeaderLen = 24;
inline constexpr std::size_t kRecordHeaderLen = 16;

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, bool big_endian) : bytes_(bytes), big_(big_endian) {}

  std::size_t remaining(std::size_t pos) const { return pos <= bytes_.size() ? bytes_.size() - pos : 0; }

  std::uint32_t u32(std::size_t pos) const {
    const auto* p = bytes_.data() + pos;
    if (big_) return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
    return (std::uint32_t{p[3]} << 24) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[1]} << 8) | p[0];
  }
  std::uint16_t u16(std::size_t pos) const {
    const auto* p = bytes_.data() + pos;
    if (big_) return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
    return static_cast<std::uint16_t>((p[1] << 8) | p[0]);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool big_;
};

// Network byte order helpers for protocol headers.
inline std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}
inline void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void set16(std::vector<std::uint8_t>& out, std::size_t pos, std::uint16_t v) {
  out[pos] = static_cast<std::uint8_t>(v >> 8);
  out[pos + 1] = static_cast<std::uint8_t>(v);
}

inline void put_file32(std::vector<std::uint8_t>& out, std::uint32_t v, bool big) {
  if (big) {
    put32(out, v);
  } else {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}
inline void put_file16(std::vector<std::uint8_t>& out, std::uint16_t v, bool big) {
  if (big) {
    put16(out, v);
  } else {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
}

// RFC 1071 ones-complement sum.
inline std::uint32_t sum16(std::span<const std::uint8_t> data, std::uint32_t acc = 0) {
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) acc += static_cast<std::uint32_t>((data[i] << 8) | data[i + 1]);
  if (i < data.size()) acc += static_cast<std::uint32_t>(data[i] << 8);
  return acc;
}
inline std::uint16_t fold(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xffff) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc);
}

inline Packet decode_frame(std::span<const std::uint8_t> frame) {
  Packet pkt;
  if (frame.size() < kEthernetHeaderLen) {
    pkt.ethertype = 0;
    pkt.payload.assign(frame.begin(), frame.end());
    return pkt;
  }
  std::copy(frame.begin(), frame.begin() + 6, pkt.dst_mac.begin());
  std::copy(frame.begin() + 6, frame.begin() + 12, pkt.src_mac.begin());
  pkt.ethertype = be16(frame.data() + 12);
  auto rest = frame.subspan(kEthernetHeaderLen);

  auto as_other = [&] {
    pkt.protocol = Protocol::kOther;
    pkt.ip.reset();
    pkt.tcp.reset();
    pkt.udp.reset();
    pkt.icmp.reset();
    pkt.payload.assign(rest.begin(), rest.end());
    return pkt;
  };

  if (pkt.ethertype != kEtherTypeIpv4 || rest.size() < kIpv4HeaderLen) return as_other();
  const std::uint8_t* ip = rest.data();
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
  const std::size_t total = be16(ip + 2);
  if ((ip[0] >> 4) != 4 || ihl < kIpv4HeaderLen || ihl > rest.size() || total < ihl || total > rest.size())
    return as_other();

  Ipv4Header h;
  h.tos = ip[1];
  h.id = be16(ip + 4);
  h.flags_frag = be16(ip + 6);
  h.ttl = ip[8];
  h.proto = ip[9];
  h.checksum = be16(ip + 10);
  h.src = be32(ip + 12);
  h.dst = be32(ip + 16);
  h.options.assign(ip + kIpv4HeaderLen, ip + ihl);
  pkt.ip = h;
  pkt.trailer.assign(rest.begin() + static_cast<std::ptrdiff_t>(total), rest.end());
  auto l4 = rest.subspan(ihl, total - ihl);

  // Fragments other than the first, and unknown protocols, keep only IP.
  const bool first_fragment = (h.flags_frag & 0x1fff) == 0;
  if (first_fragment && h.proto == 6 && l4.size() >= kTcpHeaderLen) {
    const std::size_t off = static_cast<std::size_t>(l4[12] >> 4) * 4;
    if (off >= kTcpHeaderLen && off <= l4.size() && (l4[12] & 0x0f) == 0) {
      TcpHeader t;
      t.src_port = be16(l4.data());
      t.dst_port = be16(l4.data() + 2);
      t.seq = be32(l4.data() + 4);
      t.ack = be32(l4.data() + 8);
      t.flags = l4[13];
      t.window = be16(l4.data() + 14);
      t.checksum = be16(l4.data() + 16);
      t.urgent = be16(l4.data() + 18);
      t.options.assign(l4.begin() + kTcpHeaderLen, l4.begin() + off);
      pkt.protocol = Protocol::kTcp;
      pkt.tcp = t;
      pkt.payload.assign(l4.begin() + off, l4.end());
      return pkt;
    }
  } else if (first_fragment && h.proto == 17 && l4.size() >= kUdpHeaderLen && be16(l4.data() + 4) == l4.size()) {
    UdpHeader u;
    u.src_port = be16(l4.data());
    u.dst_port = be16(l4.data() + 2);
    u.checksum = be16(l4.data() + 6);
    pkt.protocol = Protocol::kUdp;
    pkt.udp = u;
    pkt.payload.assign(l4.begin() + kUdpHeaderLen, l4.end());
    return pkt;
  } else if (first_fragment && h.proto == 1 && l4.size() >= kIcmpHeaderLen) {
    IcmpHeader c;
    c.type = l4[0];
    c.code = l4[1];
    c.checksum = be16(l4.data() + 2);
    c.rest = be32(l4.data() + 4);
    pkt.protocol = Protocol::kIcmp;
    pkt.icmp = c;
    pkt.payload.assign(l4.begin() + kIcmpHeaderLen, l4.end());
    return pkt;
  }
  pkt.protocol = Protocol::kOther;
  pkt.payload.assign(l4.begin(), l4.end());
  return pkt;
}

inline std::vector<std::uint8_t> encode_frame(const Packet& pkt) {
  std::vector<std::uint8_t> out;
  out.reserve(pkt.frame_len());
  out.insert(out.end(), pkt.dst_mac.begin(), pkt.dst_mac.end());
  out.insert(out.end(), pkt.src_mac.begin(), pkt.src_mac.end());
  put16(out, pkt.ethertype);
  if (!pkt.ip) {
    out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
    return out;
  }
  const auto& h = *pkt.ip;
  const std::size_t ip_start = out.size();
  const std::size_t ihl = kIpv4HeaderLen + h.options.size();
  const std::size_t total = ihl + pkt.transport_header_len() + pkt.payload.size();
  out.push_back(static_cast<std::uint8_t>(0x40 | (ihl / 4)));
  out.push_back(h.tos);
  put16(out, static_cast<std::uint16_t>(total));
  put16(out, h.id);
  put16(out, h.flags_frag);
  out.push_back(h.ttl);
  out.push_back(h.proto);
  put16(out, 0);
  put32(out, h.src);
  put32(out, h.dst);
  out.insert(out.end(), h.options.begin(), h.options.end());
  set16(out, ip_start + 10,
        h.checksum ? *h.checksum : fold(sum16(std::span(out).subspan(ip_start, ihl))));

  const std::size_t l4_start = out.size();
  const std::size_t l4_len = total - ihl;
  auto pseudo = [&](std::uint8_t proto) {
    std::uint32_t acc = 0;
    acc += h.src >> 16;
    acc += h.src & 0xffff;
    acc += h.dst >> 16;
    acc += h.dst & 0xffff;
    acc += proto;
    acc += static_cast<std::uint32_t>(l4_len);
    return acc;
  };
  std::optional<std::uint16_t> stored;
  std::size_t ck_pos = 0;
  std::uint32_t acc0 = 0;
  if (pkt.tcp) {
    const auto& t = *pkt.tcp;
    put16(out, t.src_port);
    put16(out, t.dst_port);
    put32(out, t.seq);
    put32(out, t.ack);
    out.push_back(static_cast<std::uint8_t>(((kTcpHeaderLen + t.options.size()) / 4) << 4));
    out.push_back(t.flags);
    put16(out, t.window);
    put16(out, 0);
    put16(out, t.urgent);
    out.insert(out.end(), t.options.begin(), t.options.end());
    stored = t.checksum;
    ck_pos = l4_start + 16;
    acc0 = pseudo(6);
  } else if (pkt.udp) {
    const auto& u = *pkt.udp;
    put16(out, u.src_port);
    put16(out, u.dst_port);
    put16(out, static_cast<std::uint16_t>(l4_len));
    put16(out, 0);
    stored = u.checksum;
    ck_pos = l4_start + 6;
    acc0 = pseudo(17);
  } else if (pkt.icmp) {
    const auto& c = *pkt.icmp;
    out.push_back(c.type);
    out.push_back(c.code);
    put16(out, 0);
    put32(out, c.rest);
    stored = c.checksum;
    ck_pos = l4_start + 2;
  }
  out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
  const std::size_t l4_end = out.size();
  out.insert(out.end(), pkt.trailer.begin(), pkt.trailer.end());
  if (pkt.tcp || pkt.udp || pkt.icmp) {
    std::uint16_t ck = 0;
    if (stored) {
      ck = *stored;
    } else {
      ck = fold(sum16(std::span(out).subspan(l4_start, l4_end - l4_start), acc0));
      if (pkt.udp && ck == 0) ck = 0xffff;
    }
    set16(out, ck_pos, ck);
  }
  return out;
}

}  // namespace pcap_detail

// Classic libpcap container, Ethernet link type only.
inline TrafficTrace parse_pcap(std::span<const std::uint8_t> bytes) {
  using namespace pcap_detail;
  if (bytes.size() < kGlobalHeaderLen) throw MalformedPcap("pcap: truncated global header");
  const std::uint32_t raw = be32(bytes.data());
  TrafficTrace trace;
  auto& fmt = trace.format;
  auto swap32 = [](std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
  };
  if (raw == kMagicMicro || raw == kMagicNano) {
    fmt.big_endian = true;
    fmt.nanosecond = raw == kMagicNano;
  } else if (swap32(raw) == kMagicMicro || swap32(raw) == kMagicNano) {
    fmt.big_endian = false;
    fmt.nanosecond = swap32(raw) == kMagicNano;
  } else {
    throw MalformedPcap("pcap: bad magic number");
  }
  Reader rd(bytes, fmt.big_endian);
  fmt.version_major = rd.u16(4);
  fmt.version_minor = rd.u16(6);
  fmt.thiszone = static_cast<std::int32_t>(rd.u32(8));
  fmt.sigfigs = rd.u32(12);
  fmt.snaplen = rd.u32(16);
  fmt.linktype = rd.u32(20);
  if (fmt.linktype != 1) throw MalformedPcap("pcap: unsupported link type " + std::to_string(fmt.linktype));

  const double tick = fmt.nanosecond ? 1e-9 : 1e-6;
  const std::uint32_t tick_max = fmt.nanosecond ? 1000000000u : 1000000u;
  std::size_t pos = kGlobalHeaderLen;
  while (pos < bytes.size()) {
    if (rd.remaining(pos) < kRecordHeaderLen) throw MalformedPcap("pcap: truncated record header");
    const std::uint32_t sec = rd.u32(pos);
    const std::uint32_t frac = rd.u32(pos + 4);
    const std::uint32_t caplen = rd.u32(pos + 8);
    const std::uint32_t origlen = rd.u32(pos + 12);
    if (frac >= tick_max) throw MalformedPcap("pcap: sub-second field out of range");
    pos += kRecordHeaderLen;
    if (rd.remaining(pos) < caplen) throw MalformedPcap("pcap: truncated record body");
    Packet pkt = decode_frame(bytes.subspan(pos, caplen));
    pkt.timestamp = static_cast<double>(sec) + static_cast<double>(frac) * tick;
    if (origlen != caplen) pkt.wire_length = origlen;
    pkt.provenance = Provenance::kOriginal;
    trace.packets.push_back(std::move(pkt));
    pos += caplen;
  }
  return trace;
}

inline std::vector<std::uint8_t> serialize_pcap(const TrafficTrace& trace) {
  using namespace pcap_detail;
  const auto& fmt = trace.format;
  const bool big = fmt.big_endian;
  std::vector<std::uint8_t> out;
  put_file32(out, fmt.nanosecond ? kMagicNano : kMagicMicro, big);
  put_file16(out, fmt.version_major, big);
  put_file16(out, fmt.version_minor, big);
  put_file32(out, static_cast<std::uint32_t>(fmt.thiszone), big);
  put_file32(out, fmt.sigfigs, big);
  put_file32(out, fmt.snaplen, big);
  put_file32(out, fmt.linktype, big);

  const double scale = fmt.nanosecond ? 1e9 : 1e6;
  const std::uint64_t tick_max = fmt.nanosecond ? 1000000000ull : 1000000ull;
  for (const auto& pkt : trace.packets) {
    auto frame = encode_frame(pkt);
    double whole = std::floor(pkt.timestamp);
    auto frac = static_cast<std::uint64_t>(std::llround((pkt.timestamp - whole) * scale));
    if (frac >= tick_max) {
      whole += 1.0;
      frac -= tick_max;
    }
    put_file32(out, static_cast<std::uint32_t>(whole), big);
    put_file32(out, static_cast<std::uint32_t>(frac), big);
    put_file32(out, static_cast<std::uint32_t>(frame.size()), big);
    put_file32(out, pkt.wire_length ? *pkt.wire_length : static_cast<std::uint32_t>(frame.size()), big);
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrafficError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrafficError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline TrafficTrace read_pcap(const std::string& path) { return parse_pcap(read_file_bytes(path)); }
inline void write_pcap(const std::string& path, const TrafficTrace& trace) {
  write_file_bytes(path, serialize_pcap(trace));
}

}  // namespace tmut
