#pragma once

#include <cstdio>
#include <sstream>
#include <string>

#include "tmut/core/packet.hpp"

namespace tmut {

inline std::string trace_to_csv(const TrafficTrace& trace) {
  std::ostringstream os;
  os << "timestamp,src_ip,dst_ip,src_port,dst_port,protocol,tcp_flags,ttl,frame_len,payload_len,provenance,recipe\n";
  char ts[32];
  for (const auto& p : trace.packets) {
    std::snprintf(ts, sizeof ts, "%.9f", p.timestamp);
    os << ts << ',' << ip_to_string(p.src_ip()) << ',' << ip_to_string(p.dst_ip()) << ',' << p.src_port() << ','
       << p.dst_port() << ',' << to_string(p.protocol) << ',' << (p.tcp ? int{p.tcp->flags} : 0) << ','
       << (p.ip ? int{p.ip->ttl} : 0) << ',' << p.frame_len() << ',' << p.payload_len() << ','
       << (p.provenance == Provenance::kOriginal ? "ORIGINAL" : "CRAFTED") << ','
       << (p.recipe ? to_string(*p.recipe) : "") << '\n';
  }
  return os.str();
}

}  // namespace tmut
