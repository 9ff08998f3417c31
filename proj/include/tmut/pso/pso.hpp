#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmut/core/meta_info.hpp"
#include "tmut/features/feature_io.hpp"
#include "tmut/features/normalize.hpp"
#include "tmut/features/packet_extractor.hpp"
#include "tmut/models/dense.hpp"

namespace tmut {

struct PsoConfig {
  double omega = 0.729;
  double c1 = 1.49445;
  double c2 = 1.49445;
  std::size_t n_swarm = 10;
  std::size_t n_iter = 5;
  std::size_t m = 5;  // timestamp sections at init
  std::uint64_t seed = 1;
  bool fixed_lead = false;  // packet 0 is context only and takes no crafts
  RebuildOptions rebuild;

  void validate() const {
    if (n_swarm < 1) throw std::invalid_argument("pso: n_swarm must be >= 1");
    if (m < 1) throw std::invalid_argument("pso: m must be >= 1");
  }
};

struct Particle {
  MetaInfoVector x;
  Vec v;
  MetaInfoVector best_x;
  double best_fit = std::numeric_limits<double>::infinity();
};

struct Swarm {
  MetaSpace space;
  std::vector<Particle> particles;
  std::vector<Rng> rngs;  // one stream per particle
  MetaInfoVector global_best_x;
  double global_best_fit = std::numeric_limits<double>::infinity();
};

// Independent, reproducible stream for particle j.
inline Rng particle_rng(std::uint64_t seed, std::size_t j) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(j), 0x9e3779b9u};
  return Rng(seq);
}

// Decrements the largest n_crafted values (lowest slot first on ties) until
// the total fits the pool.
inline void enforce_pool(MetaInfoVector& x, std::size_t pool) {
  std::size_t total = x.total_crafted();
  while (total > pool) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < x.n_pkts(); ++i)
      if (x.n_crafted(i) > x.n_crafted(arg)) arg = i;
    x.n_crafted(arg) -= 1.0;
    --total;
  }
}

inline void sort_timestamps(MetaInfoVector& x) {
  Vec ts(x.n_pkts());
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = x.timestamp(i);
  if (std::is_sorted(ts.begin(), ts.end())) return;
  std::sort(ts.begin(), ts.end());
  for (std::size_t i = 0; i < ts.size(); ++i) x.timestamp(i) = ts[i];
}

// Clip to the domain, snap integer dims, re-enforce the pool and timestamp order.
inline void repair(MetaInfoVector& x, const MetaSpace& s) {
  auto vals = x.values();
  for (std::size_t d = 0; d < vals.size(); ++d) {
    double v = std::isfinite(vals[d]) ? vals[d] : s.lower[d];
    v = std::clamp(v, s.lower[d], s.upper[d]);
    if (s.integral[d]) v = std::clamp(std::round(v), s.lower[d], s.upper[d]);
    vals[d] = v;
  }
  enforce_pool(x, s.craft_pool);
  sort_timestamps(x);
}

template <class R>
MetaInfoVector random_position(const TrafficTrace& trace, const MetaSpace& s, std::size_t m, R& rng) {
  MetaInfoVector x(s.n_pkts, s.k);
  std::uniform_int_distribution<std::size_t> section(1, m);
  double t = trace.packets.front().timestamp;
  x.timestamp(0) = t;
  for (std::size_t i = 1; i < s.n_pkts; ++i) {
    t += s.max_gap[i] * static_cast<double>(section(rng)) / static_cast<double>(m);
    x.timestamp(i) = std::min(t, s.t_last_max);
  }
  for (std::size_t i = 0; i < s.n_pkts; ++i) {
    const auto hi = static_cast<std::size_t>(s.upper[x.n_crafted_index(i)]);
    x.n_crafted(i) = static_cast<double>(std::uniform_int_distribution<std::size_t>(0, hi)(rng));
    for (std::size_t j = 0; j < s.k; ++j) {
      x.interarrival(i, j) = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * s.max_gap[i];
      x.protocol_layers(i, j) = static_cast<double>(std::uniform_int_distribution<int>(3, 4)(rng));
      x.payload_size(i, j) = static_cast<double>(std::uniform_int_distribution<std::uint32_t>(0, kMaxCraftPayload)(rng));
    }
  }
  repair(x, s);
  return x;
}

inline Swarm initialize(const TrafficTrace& trace, const OverheadBudget& budget, const PsoConfig& cfg) {
  cfg.validate();
  if (trace.empty()) throw EmptyTrace("pso: empty trace");
  Swarm sw;
  sw.space = MetaSpace::build(trace, budget, budget.default_capacity());
  if (cfg.fixed_lead) {
    sw.space.craftable[0] = false;
    sw.space.upper[MetaInfoVector(trace.size(), sw.space.k).n_crafted_index(0)] = 0.0;
  }
  for (std::size_t j = 0; j < cfg.n_swarm; ++j) {
    sw.rngs.push_back(particle_rng(cfg.seed, j));
    Particle p;
    p.x = random_position(trace, sw.space, cfg.m, sw.rngs.back());
    p.v.assign(p.x.dim(), 0.0);
    p.best_x = p.x;
    sw.particles.push_back(std::move(p));
  }
  sw.global_best_x = sw.particles.front().x;
  return sw;
}

// v' = omega v + r1 c1 (b - x) + r2 c2 (g - x), with r1, r2 drawn once per call.
template <class R>
Vec update_velocity(const Particle& p, const MetaInfoVector& g, const PsoConfig& cfg, R& rng) {
  if (p.v.size() != p.x.dim() || g.dim() != p.x.dim() || p.best_x.dim() != p.x.dim())
    throw LayoutMismatch("pso: particle shapes disagree");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r1 = u(rng), r2 = u(rng);
  const auto x = p.x.values(), b = p.best_x.values(), gv = g.values();
  Vec v(p.v.size());
  for (std::size_t d = 0; d < v.size(); ++d)
    v[d] = cfg.omega * p.v[d] + r1 * cfg.c1 * (b[d] - x[d]) + r2 * cfg.c2 * (gv[d] - x[d]);
  return v;
}

inline MetaInfoVector update_position(const Particle& p, const MetaSpace& s) {
  MetaInfoVector x = p.x;
  auto vals = x.values();
  for (std::size_t d = 0; d < vals.size(); ++d) vals[d] += p.v[d];
  repair(x, s);
  return x;
}

// Maps a rebuilt trace to one feature row per original packet.
using TraceFeaturizer = std::function<Matrix(const TrafficTrace&)>;

// Runs a forked copy of `snapshot` over the trace; crafted packets update the
// extractor state but only original packets yield rows.
inline TraceFeaturizer packet_featurizer(const PacketExtractor& snapshot, Normalization norm = {}) {
  return [snapshot, norm = std::move(norm)](const TrafficTrace& t) {
    PacketExtractor ext = snapshot;
    Matrix rows;
    for (const auto& p : t.packets) {
      Vec f = ext.process(p);
      if (p.provenance != Provenance::kOriginal) continue;
      rows.push_back(norm.min.empty() ? std::move(f) : normalize_values(f, norm));
    }
    return rows;
  };
}

// Mean over rows of the mean distance to the k nearest targets (k = 0: all).
inline double set_distance(const Matrix& rows, const Matrix& targets, std::size_t k_nearest = 0) {
  if (targets.empty()) throw std::invalid_argument("set_distance: empty target set");
  if (rows.empty()) return 0.0;
  const std::size_t k = (k_nearest == 0 || k_nearest > targets.size()) ? targets.size() : k_nearest;
  double total = 0.0;
  Vec d(targets.size());
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < targets.size(); ++i) d[i] = euclidean(r, targets[i]);
    if (k < d.size()) std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += d[i];
    total += s / static_cast<double>(k);
  }
  return total / static_cast<double>(rows.size());
}

// Rebuild seed is fixed per run so that a position always maps to the same trace.
inline TrafficTrace rebuild_for_eval(const MetaInfoVector& x, const TrafficTrace& original,
                                     const OverheadBudget& budget, const PsoConfig& cfg) {
  Rng rng(cfg.seed ^ 0x5bd1e995ULL);
  return rebuild(x, original, budget, rng, cfg.rebuild);
}

struct EffectivenessOptions {
  std::size_t k_nearest = 0;
};

inline double effectiveness(const MetaInfoVector& x, const Matrix& adver, const TraceFeaturizer& featurize,
                            const TrafficTrace& original, const OverheadBudget& budget, const PsoConfig& cfg,
                            const EffectivenessOptions& opt = {}) {
  return set_distance(featurize(rebuild_for_eval(x, original, budget, cfg)), adver, opt.k_nearest);
}

// Scores a rebuilt trace; lower is better.
using TraceFitness = std::function<double(const TrafficTrace&)>;

struct PsoResult {
  TrafficTrace trace;
  MetaInfoVector best_x;
  double best_fit = std::numeric_limits<double>::infinity();
  Vec history;  // global best after the initial evaluation, then after each iteration
};

struct PsoObserver {
  std::function<void(std::size_t iter, std::size_t particle, double fit)> on_eval;
};

// Evaluate the initial swarm, then n_iter rounds of (update v and x, evaluate).
inline PsoResult mutate(const TrafficTrace& trace, const TraceFitness& fitness, const PsoConfig& cfg,
                        const OverheadBudget& budget, const PsoObserver& obs = {}) {
  Swarm sw = initialize(trace, budget, cfg);
  PsoResult res;
  auto evaluate = [&](std::size_t iter) {
    for (std::size_t j = 0; j < sw.particles.size(); ++j) {
      Particle& p = sw.particles[j];
      const double f = fitness(rebuild_for_eval(p.x, trace, budget, cfg));
      if (obs.on_eval) obs.on_eval(iter, j, f);
      if (f < p.best_fit) {
        p.best_fit = f;
        p.best_x = p.x;
      }
      if (f < sw.global_best_fit) {
        sw.global_best_fit = f;
        sw.global_best_x = p.x;
      }
    }
    res.history.push_back(sw.global_best_fit);
  };
  evaluate(0);
  for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
    for (std::size_t j = 0; j < sw.particles.size(); ++j) {
      Particle& p = sw.particles[j];
      p.v = update_velocity(p, sw.global_best_x, cfg, sw.rngs[j]);
      p.x = update_position(p, sw.space);
    }
    evaluate(it);
  }
  res.best_x = sw.global_best_x;
  res.best_fit = sw.global_best_fit;
  res.trace = rebuild_for_eval(res.best_x, trace, budget, cfg);
  return res;
}

inline PsoResult mutate(const TrafficTrace& trace, const Matrix& adver, const TraceFeaturizer& featurize,
                        const PsoConfig& cfg, const OverheadBudget& budget, const EffectivenessOptions& opt = {},
                        const PsoObserver& obs = {}) {
  if (adver.empty()) throw std::invalid_argument("pso: empty adversarial feature set");
  return mutate(
      trace, [&](const TrafficTrace& t) { return set_distance(featurize(t), adver, opt.k_nearest); }, cfg, budget,
      obs);
}

inline std::string history_to_csv(const Vec& history) {
  std::ostringstream os;
  os << "iteration,global_best_fit\n";
  for (std::size_t i = 0; i < history.size(); ++i) os << i << ',' << format_double(history[i]) << '\n';
  return os.str();
}

}  // namespace tmut
