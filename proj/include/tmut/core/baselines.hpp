#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "tmut/core/craft.hpp"
#include "tmut/core/meta_info.hpp"
#include "tmut/core/packet.hpp"

namespace tmut {

// Random-ST: each inter-arrival gap is stretched by an independent factor
// drawn from U[1, l_t). Packet content and order are untouched.
inline TrafficTrace random_st(const TrafficTrace& trace, const OverheadBudget& budget, Rng& rng) {
  budget.validate();
  TrafficTrace out = trace;
  if (trace.size() < 2) return out;
  std::uniform_real_distribution<double> factor(1.0, budget.l_t);
  double shift = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double gap = trace.packets[i].timestamp - trace.packets[i - 1].timestamp;
    const double f = budget.l_t > 1.0 ? factor(rng) : 1.0;
    shift += (f - 1.0) * gap;
    out.packets[i].timestamp = trace.packets[i].timestamp + shift;
  }
  return out;
}

// Random-Dup: floor(l_c * N) copies of randomly chosen original packets, each
// placed immediately before its source with the same timestamp.
inline TrafficTrace random_dup(const TrafficTrace& trace, const OverheadBudget& budget, Rng& rng) {
  budget.validate();
  const std::size_t n = trace.size();
  const std::size_t pool = budget.craft_pool(n);
  if (n == 0 || pool == 0) return trace;

  std::vector<std::size_t> copies(n, 0);
  std::vector<std::size_t> order(n);
  std::size_t left = pool;
  while (left > 0) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n && left > 0; ++i, --left) ++copies[order[i]];
  }

  TrafficTrace out;
  out.format = trace.format;
  out.packets.reserve(n + pool);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < copies[i]; ++c) {
      Packet dup = trace.packets[i];
      dup.provenance = Provenance::kCrafted;
      dup.recipe = CraftKind::kDuplicate;
      out.packets.push_back(std::move(dup));
    }
    out.packets.push_back(trace.packets[i]);
  }
  return out;
}

}  // namespace tmut
