#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tmut/core/craft.hpp"
#include "tmut/core/packet.hpp"

namespace tmut {

// Absolute slack when comparing elapsed times against the l_t cap.
inline constexpr double kTimeTolerance = 1e-9;

struct OverheadBudget {
  double l_c = 0.0;  // crafted packets / original packets
  double l_t = 1.0;  // mutated elapsed / original elapsed

  void validate() const {
    if (!(l_c >= 0.0) || !std::isfinite(l_c)) throw TrafficError("budget: l_c must be >= 0");
    if (!(l_t >= 1.0) || !std::isfinite(l_t)) throw TrafficError("budget: l_t must be >= 1");
  }

  std::size_t craft_pool(std::size_t n_pkts) const {
    return static_cast<std::size_t>(std::floor(l_c * static_cast<double>(n_pkts) + 1e-9));
  }

  // Per-packet craft capacity used to lay out the vector.
  std::size_t default_capacity() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(l_c - 1e-12)));
  }

  double max_elapsed(double original_elapsed) const { return l_t * original_elapsed; }
};

// Flattened layout per original packet i:
//   [timestamp, n_crafted, (interarrival, protocol_layers, payload_size) x K]
class MetaInfoVector {
 public:
  static constexpr std::size_t kMalFields = 2;
  static constexpr std::size_t kCraftFields = 3;

  MetaInfoVector() = default;
  MetaInfoVector(std::size_t n_pkts, std::size_t k)
      : n_pkts_(n_pkts), k_(k), x_(n_pkts * (kCraftFields * k + kMalFields), 0.0) {}

  static std::size_t dimension(std::size_t n_pkts, std::size_t k) { return n_pkts * (kCraftFields * k + kMalFields); }

  std::size_t n_pkts() const { return n_pkts_; }
  std::size_t capacity() const { return k_; }
  std::size_t dim() const { return x_.size(); }
  std::size_t stride() const { return kCraftFields * k_ + kMalFields; }

  std::span<double> values() { return x_; }
  std::span<const double> values() const { return x_; }

  std::size_t timestamp_index(std::size_t i) const { return i * stride(); }
  std::size_t n_crafted_index(std::size_t i) const { return i * stride() + 1; }
  std::size_t iat_index(std::size_t i, std::size_t j) const { return i * stride() + kMalFields + j * kCraftFields; }
  std::size_t layers_index(std::size_t i, std::size_t j) const { return iat_index(i, j) + 1; }
  std::size_t payload_index(std::size_t i, std::size_t j) const { return iat_index(i, j) + 2; }

  double& timestamp(std::size_t i) { return x_[timestamp_index(i)]; }
  double timestamp(std::size_t i) const { return x_[timestamp_index(i)]; }
  double& n_crafted(std::size_t i) { return x_[n_crafted_index(i)]; }
  double n_crafted(std::size_t i) const { return x_[n_crafted_index(i)]; }
  double& interarrival(std::size_t i, std::size_t j) { return x_[iat_index(i, j)]; }
  double interarrival(std::size_t i, std::size_t j) const { return x_[iat_index(i, j)]; }
  double& protocol_layers(std::size_t i, std::size_t j) { return x_[layers_index(i, j)]; }
  double protocol_layers(std::size_t i, std::size_t j) const { return x_[layers_index(i, j)]; }
  double& payload_size(std::size_t i, std::size_t j) { return x_[payload_index(i, j)]; }
  double payload_size(std::size_t i, std::size_t j) const { return x_[payload_index(i, j)]; }

  std::size_t total_crafted() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < n_pkts_; ++i) n += static_cast<std::size_t>(std::lround(n_crafted(i)));
    return n;
  }

  bool operator==(const MetaInfoVector&) const = default;

 private:
  std::size_t n_pkts_ = 0;
  std::size_t k_ = 0;
  std::vector<double> x_;
};

// Per-dimension value ranges of the meta-info search space for one trace.
struct MetaSpace {
  std::size_t n_pkts = 0;
  std::size_t k = 0;
  std::size_t craft_pool = 0;
  double t_first = 0.0;
  double t_last_max = 0.0;  // t_first + l_t * original elapsed
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> integral;
  std::vector<double> max_gap;  // l_t * original gap before packet i (0 for i = 0)
  std::vector<bool> craftable;  // anchor admits at least one recipe

  static MetaSpace build(const TrafficTrace& trace, const OverheadBudget& budget, std::size_t k) {
    budget.validate();
    if (trace.empty()) throw EmptyTrace("meta space: empty trace");
    MetaSpace s;
    s.n_pkts = trace.size();
    s.k = k;
    s.craft_pool = budget.craft_pool(trace.size());
    s.t_first = trace.packets.front().timestamp;
    // Step down so that t_last_max - t_first never rounds above the cap;
    // epoch-scale timestamps have ulps far above kTimeTolerance.
    const double cap = budget.max_elapsed(trace.elapsed());
    s.t_last_max = s.t_first + cap;
    while (s.t_last_max - s.t_first > cap) s.t_last_max = std::nextafter(s.t_last_max, s.t_first);
    const std::size_t d = MetaInfoVector::dimension(s.n_pkts, k);
    s.lower.assign(d, 0.0);
    s.upper.assign(d, 0.0);
    s.integral.assign(d, false);
    s.max_gap.assign(s.n_pkts, 0.0);
    s.craftable.assign(s.n_pkts, false);
    MetaInfoVector probe(s.n_pkts, k);
    for (std::size_t i = 0; i < s.n_pkts; ++i) {
      const auto& p = trace.packets[i];
      if (i > 0) s.max_gap[i] = budget.l_t * (p.timestamp - trace.packets[i - 1].timestamp);
      s.craftable[i] = p.ip.has_value();
      s.lower[probe.timestamp_index(i)] = s.t_first;
      s.upper[probe.timestamp_index(i)] = s.t_last_max;
      s.upper[probe.n_crafted_index(i)] = s.craftable[i] ? static_cast<double>(k) : 0.0;
      s.integral[probe.n_crafted_index(i)] = true;
      for (std::size_t j = 0; j < k; ++j) {
        s.upper[probe.iat_index(i, j)] = s.max_gap[i];
        s.lower[probe.layers_index(i, j)] = 3.0;
        s.upper[probe.layers_index(i, j)] = 4.0;
        s.integral[probe.layers_index(i, j)] = true;
        s.upper[probe.payload_index(i, j)] = static_cast<double>(kMaxCraftPayload);
        s.integral[probe.payload_index(i, j)] = true;
      }
    }
    return s;
  }

  std::size_t dim() const { return lower.size(); }
};

// Trace -> meta-info vector with no mutation applied.
inline MetaInfoVector vectorize(const TrafficTrace& trace, const OverheadBudget& budget, std::size_t k) {
  budget.validate();
  if (trace.empty()) throw EmptyTrace("vectorize: empty trace");
  MetaInfoVector miv(trace.size(), k);
  for (std::size_t i = 0; i < trace.size(); ++i) miv.timestamp(i) = trace.packets[i].timestamp;
  return miv;
}

struct RebuildOptions {
  bool allow_ttl_trick = false;
  std::uint8_t ttl_trick_ttl = 1;
};

// Meta-info vector -> concrete trace. Crafted packets for packet i sit
// `interarrival` seconds before it, never earlier than the preceding packet.
inline TrafficTrace rebuild(const MetaInfoVector& miv, const TrafficTrace& original, const OverheadBudget& budget,
                            Rng& rng, const RebuildOptions& opts = {}) {
  budget.validate();
  if (original.empty()) throw EmptyTrace("rebuild: empty original trace");
  if (miv.n_pkts() != original.size() || miv.dim() != MetaInfoVector::dimension(original.size(), miv.capacity()))
    throw LayoutMismatch("rebuild: meta-info layout does not match trace (" + std::to_string(miv.n_pkts()) +
                         " slots vs " + std::to_string(original.size()) + " packets)");

  const std::size_t n = original.size();
  const std::size_t k = miv.capacity();
  std::size_t crafted_total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ts = miv.timestamp(i);
    const double nc = miv.n_crafted(i);
    if (!std::isfinite(ts) || ts < 0.0) throw LayoutMismatch("rebuild: invalid timestamp in slot " + std::to_string(i));
    if (i > 0 && ts < miv.timestamp(i - 1)) throw LayoutMismatch("rebuild: timestamps decrease at slot " + std::to_string(i));
    if (!(nc >= 0.0) || nc > static_cast<double>(k) || nc != std::floor(nc))
      throw LayoutMismatch("rebuild: n_crafted out of range in slot " + std::to_string(i));
    crafted_total += static_cast<std::size_t>(nc);
  }
  const std::size_t pool = budget.craft_pool(n);
  if (crafted_total > pool)
    throw BudgetViolation("rebuild: " + std::to_string(crafted_total) + " crafted packets exceed pool of " +
                          std::to_string(pool));

  TrafficTrace out;
  out.format = original.format;
  out.packets.reserve(n + crafted_total);
  const double t_first = original.packets.front().timestamp;
  double prev = std::min(t_first, miv.timestamp(0));

  struct Pending {
    double t;
    std::size_t j;
  };
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < n; ++i) {
    const Packet& anchor_src = original.packets[i];
    const double ts = miv.timestamp(i);
    const auto nc = static_cast<std::size_t>(miv.n_crafted(i));
    pending.clear();
    for (std::size_t j = 0; j < nc; ++j) {
      const double iat = std::max(0.0, miv.interarrival(i, j));
      pending.push_back({std::max(prev, ts - iat), j});
    }
    std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) { return a.t < b.t; });

    Packet anchor = anchor_src;
    anchor.timestamp = ts;
    for (const auto& c : pending) {
      const int layers = miv.protocol_layers(i, c.j) >= 3.5 ? 4 : 3;
      const auto candidates = candidate_recipes(anchor, layers, opts.allow_ttl_trick);
      if (candidates.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const CraftRecipe recipe{candidates[pick(rng)], opts.ttl_trick_ttl};
      const double payload = std::clamp(std::round(miv.payload_size(i, c.j)), 0.0, double{kMaxCraftPayload});
      Packet crafted = craft_packet(recipe, anchor, static_cast<std::uint32_t>(payload), rng);
      crafted.timestamp = c.t;
      out.packets.push_back(std::move(crafted));
    }
    out.packets.push_back(std::move(anchor));
    prev = ts;
  }

  const double limit = budget.max_elapsed(original.elapsed());
  if (out.elapsed() > limit + kTimeTolerance)
    throw BudgetViolation("rebuild: elapsed " + std::to_string(out.elapsed()) + " exceeds l_t cap " +
                          std::to_string(limit));
  return out;
}

}  // namespace tmut
