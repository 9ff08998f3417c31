#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tmut/core/craft.hpp"
#include "tmut/core/meta_info.hpp"
#include "tmut/core/packet.hpp"

namespace tmut {

struct SafetyReport {
  bool originals_preserved = true;  // (a)
  bool craft_count_ok = true;       // (b)
  bool elapsed_ok = true;           // (c)
  bool recipes_ok = true;           // (d)
  bool monotonic = true;
  std::size_t crafted_count = 0;
  std::size_t craft_limit = 0;
  double elapsed_ratio = 1.0;
  std::vector<std::string> violations;

  bool ok() const { return originals_preserved && craft_count_ok && elapsed_ok && recipes_ok && monotonic; }
};

namespace safety_detail {

// A packet re-read from pcap carries no provenance tag; accept it as crafted
// when some recipe explains it relative to its neighbouring originals.
inline bool explainable(const Packet& p, const Packet* prev_orig, const Packet* next_orig) {
  if (p.provenance == Provenance::kCrafted && p.recipe) {
    if (!next_orig) return false;
    if (satisfies_recipe(p, *next_orig)) return true;
    return *p.recipe == CraftKind::kDuplicate && prev_orig && p.same_content(*prev_orig) &&
           p.timestamp >= prev_orig->timestamp;
  }
  Packet probe = p;
  probe.provenance = Provenance::kCrafted;
  if (prev_orig && p.same_content(*prev_orig)) return true;
  if (!next_orig) return false;
  for (int k = 0; k <= static_cast<int>(CraftKind::kDuplicate); ++k) {
    probe.recipe = static_cast<CraftKind>(k);
    if (satisfies_recipe(probe, *next_orig)) return true;
  }
  return false;
}

}  // namespace safety_detail

inline SafetyReport check_safety(const TrafficTrace& original, const TrafficTrace& mutated,
                                 const OverheadBudget& budget) {
  SafetyReport r;
  const std::size_t n = original.size();
  r.craft_limit = budget.craft_pool(n);

  // Align originals greedily in order; tagged crafted packets never match.
  std::vector<int> match(mutated.size(), -1);
  std::size_t next = 0;
  for (std::size_t i = 0; i < mutated.size() && next < n; ++i) {
    const Packet& p = mutated.packets[i];
    if (p.provenance == Provenance::kCrafted) continue;
    if (p.same_content(original.packets[next])) match[i] = static_cast<int>(next++);
  }
  if (next != n) {
    r.originals_preserved = false;
    r.violations.push_back("original packet " + std::to_string(next) + " missing or altered");
  }

  const Packet* prev_orig = nullptr;
  std::size_t upcoming = 0;  // 1 + index of the nearest matched original at or after i
  std::vector<const Packet*> next_of(mutated.size(), nullptr);
  for (std::size_t i = mutated.size(); i-- > 0;) {
    if (match[i] >= 0) upcoming = i + 1;
    next_of[i] = upcoming ? &mutated.packets[upcoming - 1] : nullptr;
  }
  for (std::size_t i = 0; i < mutated.size(); ++i) {
    const Packet& p = mutated.packets[i];
    if (i > 0 && p.timestamp < mutated.packets[i - 1].timestamp && r.monotonic) {
      r.monotonic = false;
      r.violations.push_back("timestamps decrease at index " + std::to_string(i));
    }
    if (match[i] >= 0) {
      prev_orig = &p;
      continue;
    }
    ++r.crafted_count;
    const Packet* anchor = next_of[i];
    if (!safety_detail::explainable(p, prev_orig, anchor)) {
      if (r.recipes_ok) r.violations.push_back("crafted packet at index " + std::to_string(i) + " breaks its recipe");
      r.recipes_ok = false;
    }
  }

  if (r.crafted_count > r.craft_limit) {
    r.craft_count_ok = false;
    r.violations.push_back("crafted count " + std::to_string(r.crafted_count) + " exceeds limit " +
                           std::to_string(r.craft_limit));
  }
  const double e0 = original.elapsed();
  const double e1 = mutated.elapsed();
  r.elapsed_ratio = e0 > 0.0 ? e1 / e0 : (e1 > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  if (e1 > budget.max_elapsed(e0) + kTimeTolerance) {
    r.elapsed_ok = false;
    r.violations.push_back("elapsed " + std::to_string(e1) + " exceeds " + std::to_string(budget.max_elapsed(e0)));
  }
  return r;
}

}  // namespace tmut
