#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tmut/core/baselines.hpp"
#include "tmut/core/pcap.hpp"
#include "tmut/core/safety.hpp"
#include "tmut/features/flow_extractor.hpp"
#include "tmut/gan/gan.hpp"
#include "tmut/harness/config.hpp"
#include "tmut/metrics/defense.hpp"
#include "tmut/metrics/metrics.hpp"
#include "tmut/pso/pso.hpp"

namespace tmut {

// Name of the stage in progress, so a failure can be attributed.
struct StageLog {
  std::string current;
  std::vector<std::string> completed;

  void enter(std::string s) {
    if (!current.empty()) completed.push_back(current);
    current = std::move(s);
  }
  void finish() { enter(""); }
};

inline void enter_stage(StageLog* log, const char* s) {
  if (log) log->enter(s);
}

// ---------------------------------------------------------------------------
// Traffic

// Serializes to pcap and parses back, keeping provenance tags. Timestamps end
// up on the microsecond grid exactly as a reader of the emitted file sees them.
inline TrafficTrace canonicalize(const TrafficTrace& t) {
  TrafficTrace out = parse_pcap(serialize_pcap(t));
  if (out.size() != t.size()) throw TrafficError("canonicalize: packet count changed in round trip");
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.packets[i].provenance = t.packets[i].provenance;
    out.packets[i].recipe = t.packets[i].recipe;
  }
  return out;
}

struct Scenario {
  TrafficTrace benign_train, benign_val, benign_test;  // defender side
  TrafficTrace attacker_benign;                        // attacker's own observation
  TrafficTrace malicious;                              // traffic to mutate
  TrafficTrace malicious_train;                        // labels for supervised kinds and defenses
};

inline TrafficTrace slice(const TrafficTrace& t, std::size_t a, std::size_t b) {
  TrafficTrace out;
  out.format = t.format;
  out.packets.assign(t.packets.begin() + static_cast<std::ptrdiff_t>(a), t.packets.begin() + static_cast<std::ptrdiff_t>(b));
  return out;
}

inline Scenario load_scenario(const ExperimentConfig& c) {
  Scenario s;
  const auto& src = c.traffic;
  if (src.synthetic()) {
    SynthSpec small = src.benign;
    small.packets = std::max<std::size_t>(10, src.benign.packets / 4);
    auto r1 = stage_rng(c.seed, "benign_train"), r2 = stage_rng(c.seed, "benign_val"),
         r3 = stage_rng(c.seed, "benign_test"), r4 = stage_rng(c.seed, "attacker_benign"),
         r5 = stage_rng(c.seed, "malicious"), r6 = stage_rng(c.seed, "malicious_train");
    s.benign_train = synth_benign(src.benign, r1);
    s.benign_val = synth_benign(small, r2);
    s.benign_test = synth_benign(small, r3);
    s.attacker_benign = synth_benign(src.benign, r4);
    s.malicious = synth_malicious(src.malicious_kind, src.malicious, r5);
    s.malicious_train = synth_malicious(src.malicious_kind, src.malicious, r6);
  } else {
    const TrafficTrace ben = read_pcap(src.benign_pcap);
    const TrafficTrace mal = read_pcap(src.malicious_pcap);
    if (ben.size() < 40 || mal.size() < 4) throw EmptyTrace("scenario: captures too small to split");
    const std::size_t n = ben.size();
    if (src.attacker_benign_pcap.empty()) {
      s.benign_train = slice(ben, 0, n / 2);
      s.benign_val = slice(ben, n / 2, n * 5 / 8);
      s.benign_test = slice(ben, n * 5 / 8, n * 3 / 4);
      s.attacker_benign = slice(ben, n * 3 / 4, n);
    } else {
      s.benign_train = slice(ben, 0, n * 2 / 3);
      s.benign_val = slice(ben, n * 2 / 3, n * 5 / 6);
      s.benign_test = slice(ben, n * 5 / 6, n);
      s.attacker_benign = read_pcap(src.attacker_benign_pcap);
    }
    s.malicious_train = slice(mal, 0, mal.size() / 2);
    s.malicious = slice(mal, mal.size() / 2, mal.size());
  }
  for (TrafficTrace* t : {&s.benign_train, &s.benign_val, &s.benign_test, &s.attacker_benign, &s.malicious,
                          &s.malicious_train})
    *t = canonicalize(*t);
  return s;
}

// ---------------------------------------------------------------------------
// Target NIDS

struct TargetNids {
  ExtractorConfig extractor = target_extractor_config();
  AnomalyDetector detector;
  DimMask mask;  // empty: every extracted dimension

  Matrix raw_features(const TrafficTrace& t) const { return packet_extract_trace(extractor, t); }
  Vec view(const Vec& raw) const {
    if (mask.empty()) return raw;
    return gather(raw, mask_indices(mask));
  }
  Matrix view_all(const Matrix& rows) const {
    if (mask.empty()) return rows;
    return apply_mask(rows, mask);
  }
  double score(const Vec& raw) const { return detector.score(view(raw)); }
  Vec scores(const Matrix& raw) const {
    Vec s;
    s.reserve(raw.size());
    for (const auto& r : raw) s.push_back(score(r));
    return s;
  }
  double threshold() const { return detector.threshold; }
  bool flags(double s) const { return s > detector.threshold; }
};

inline void require_packet_extractor(const ExperimentConfig& c) {
  if (c.extractor != ExtractorKind::kPacketDamped)
    throw ConfigError("the attack pipeline needs per-packet features; extractor kind 'flow' is extraction-only");
}

inline TrainingData nids_training_data(const TargetNids& base, const ExperimentConfig& c, const Scenario& s) {
  TrainingData d{base.view_all(base.raw_features(s.benign_train)), {}};
  d.y.assign(d.X.size(), 0);
  if (!is_unsupervised(c.detector)) {
    for (auto& r : base.view_all(base.raw_features(s.malicious_train))) {
      d.X.push_back(std::move(r));
      d.y.push_back(1);
    }
  }
  return d;
}

inline TargetNids train_nids(const ExperimentConfig& c, const Scenario& s, DimMask mask = {}) {
  require_packet_extractor(c);
  TargetNids n;
  n.mask = std::move(mask);
  auto rng = stage_rng(c.seed, "nids");
  n.detector = train_detector(c.detector, nids_training_data(n, c, s), c.detector_params, rng);
  calibrate_threshold(n.detector, n.view_all(n.raw_features(s.benign_val)), c.percentile);
  return n;
}

// Detection quality on clean held-out traffic: benign test (0) + original malicious (1).
inline Prf1 clean_prf1(const TargetNids& n, const Scenario& s) {
  std::vector<int> labels, preds;
  for (const auto& [trace, label] : {std::pair{&s.benign_test, 0}, std::pair{&s.malicious, 1}})
    for (double v : n.scores(n.raw_features(*trace))) {
      labels.push_back(label);
      preds.push_back(n.flags(v) ? 1 : 0);
    }
  return prf1(labels, preds, false);
}

// ---------------------------------------------------------------------------
// Attacker

struct AttackerView {
  ExtractorConfig surrogate;
  Normalization norm;
  Matrix ben;  // normalized surrogate features of the attacker's benign capture
  Matrix mal;  // same for the malicious traffic
};

inline AttackerView make_attacker_view(const ExperimentConfig& c, const TrafficTrace& benign,
                                       const TrafficTrace& malicious, double knowledge, std::string_view tag) {
  AttackerView v;
  auto rng = stage_rng(c.seed, std::string(tag) + "/surrogate");
  v.surrogate = build_surrogate(target_extractor_config(), knowledge, common_pool_config(), rng);
  Matrix ben = packet_extract_trace(v.surrogate, benign);
  Matrix mal = packet_extract_trace(v.surrogate, malicious);
  Matrix all = ben;
  all.insert(all.end(), mal.begin(), mal.end());
  v.norm = fit_normalization(all);
  v.ben = normalize_matrix(ben, v.norm);
  v.mal = normalize_matrix(mal, v.norm);
  return v;
}

inline Matrix denormalize_matrix(const Matrix& rows, const Normalization& n) {
  Matrix out = rows;
  for (auto& r : out)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = n.min[j] + r[j] * (n.max[j] - n.min[j]);
  return out;
}

// k rows chosen uniformly without replacement, kept in their original order.
inline Matrix subsample_rows(const Matrix& rows, std::size_t k, Rng& rng) {
  if (rows.size() <= k) return rows;
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  Matrix out;
  for (auto i : idx) out.push_back(rows[i]);
  return out;
}

struct AdversarialFeatures {
  Matrix adver;
  GanHistory history;
  Gan gan;
};

inline constexpr std::size_t kGanDrawsPerFeature = 10;

inline AdversarialFeatures gan_adversarial(const AttackerView& v, const ExperimentConfig& c, std::string_view tag) {
  GanConfig g = c.gan;
  g.seed = derive_seed(c.seed, std::string(tag) + "/gan");
  GanResult trained = train_gan(v.mal, v.ben, g);
  auto rng = stage_rng(c.seed, std::string(tag) + "/generate");
  GenerateOptions opt;
  // Only a minority of draws clears the discriminator, so oversample.
  opt.n_per = std::max<std::size_t>(kGanDrawsPerFeature, (2 * c.n_adver + v.mal.size() - 1) / v.mal.size());
  Matrix all = generate_adversarial(trained.gan, v.mal, opt, rng);
  return {subsample_rows(all, c.n_adver, rng), std::move(trained.history), std::move(trained.gan)};
}

// Slightly tighter time cap so microsecond rounding of the emitted capture
// can never push the elapsed ratio over l_t.
inline constexpr double kEmitTimeMargin = 3e-6;

inline OverheadBudget effective_budget(const OverheadBudget& b, double elapsed) {
  OverheadBudget e = b;
  if (elapsed > 0.0) e.l_t = std::max(1.0, b.l_t - kEmitTimeMargin / elapsed);
  return e;
}

// Shifts timestamps so the first packet sits at 0; subtraction of nearby
// doubles is exact, and the small magnitudes keep later arithmetic precise.
inline TrafficTrace to_relative(const TrafficTrace& t, double t0) {
  TrafficTrace out = t;
  for (auto& p : out.packets) p.timestamp -= t0;
  return out;
}
inline TrafficTrace from_relative(const TrafficTrace& t, double t0) {
  TrafficTrace out = t;
  for (auto& p : out.packets) p.timestamp += t0;
  return out;
}

using FitnessFactory = std::function<TraceFitness(const PacketExtractor& state)>;

struct SegmentHistory {
  std::size_t first_packet = 0;
  Vec history;
};

// Mutates the trace in consecutive segments of `seg_len` originals. Each
// segment is a separate PSO problem whose fitness sees the extractor state
// left by the already-mutated prefix. Later segments are led by a copy of the
// last emitted packet, so the gap into the segment is mutable too; the copy
// is tagged crafted to keep it out of the fitness and dropped afterwards.
// Crafts draw on a running allowance so the whole trace stays within
// floor(l_c * N).
inline TrafficTrace pso_mutate_segments(const TrafficTrace& trace, const OverheadBudget& budget, const PsoConfig& base,
                                        std::size_t seg_len, const ExtractorConfig& extractor,
                                        const FitnessFactory& make_fitness, std::vector<SegmentHistory>* histories) {
  if (trace.empty()) throw EmptyTrace("pso segments: empty trace");
  PacketExtractor state(extractor);  // every emitted packet except the last
  TrafficTrace out;
  out.format = trace.format;
  const std::size_t n = trace.size();
  std::size_t crafted = 0;
  for (std::size_t a = 0; a < n; a += seg_len) {
    const std::size_t b = std::min(n, a + seg_len);
    TrafficTrace seg = slice(trace, a, b);
    const bool anchored = a > 0;
    if (anchored) {
      Packet lead = out.packets.back();
      lead.provenance = Provenance::kCrafted;
      const double shift = lead.timestamp + (trace.packets[a].timestamp - trace.packets[a - 1].timestamp) -
                           trace.packets[a].timestamp;
      for (auto& p : seg.packets) p.timestamp += shift;
      seg.packets.insert(seg.packets.begin(), std::move(lead));
    }
    OverheadBudget sub = budget;
    const std::size_t allowance = budget.craft_pool(b) - crafted;
    sub.l_c = std::min(budget.l_c, static_cast<double>(allowance) / static_cast<double>(seg.size()));
    PsoConfig pc = base;
    pc.seed = derive_seed(base.seed, "segment/" + std::to_string(a));
    pc.fixed_lead = anchored;
    PsoResult r = mutate(seg, make_fitness(state), pc, sub);
    auto first = r.trace.packets.begin();
    if (anchored) {
      const Packet& lead = r.trace.packets.front();
      if (lead.timestamp != seg.packets.front().timestamp || !lead.same_content(seg.packets.front()))
        throw std::logic_error("pso segments: lead packet moved");
      ++first;
    } else if (!out.packets.empty()) {
      throw std::logic_error("pso segments: unexpected prefix");
    }
    if (!out.packets.empty()) state.process(out.packets.back());
    for (auto it = first; it != r.trace.packets.end(); ++it) {
      if (it->provenance == Provenance::kCrafted) ++crafted;
      out.packets.push_back(std::move(*it));
    }
    for (std::size_t i = out.packets.size() - static_cast<std::size_t>(r.trace.packets.end() - first);
         i + 1 < out.packets.size(); ++i)
      state.process(out.packets[i]);
    if (histories) histories->push_back({a, std::move(r.history)});
  }
  return out;
}

inline TraceFitness distance_fitness(const PacketExtractor& state, const Normalization& norm, const Matrix& targets,
                                     std::size_t k_nearest) {
  return [featurize = packet_featurizer(state, norm), &targets, k_nearest](const TrafficTrace& t) {
    return set_distance(featurize(t), targets, k_nearest);
  };
}

// White-box objective: mean true detector score over the segment's originals.
inline TraceFitness detector_fitness(const PacketExtractor& state, const TargetNids& nids) {
  return [featurize = packet_featurizer(state), &nids](const TrafficTrace& t) {
    const Matrix rows = featurize(t);
    double s = 0.0;
    for (const auto& r : rows) s += nids.score(r);
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  };
}

struct MutationResult {
  TrafficTrace mutated;  // canonical, provenance-tagged, absolute time
  Matrix targets;        // PSO guide set (F_adver or benign subsample), attacker-normalized
  bool targets_adversarial = false;
  GanHistory gan_history;
  std::vector<SegmentHistory> pso;
  SafetyReport safety;
};

// One attack of `kind` on `trace`. `nids` is consulted only by TWA.
inline MutationResult mutate_traffic(AttackKind kind, const ExperimentConfig& c, const AttackerView& view,
                                     const TrafficTrace& trace, const TargetNids* nids, std::string_view tag,
                                     StageLog* log = nullptr) {
  c.budget.validate();
  if (trace.empty()) throw EmptyTrace("attack: empty malicious trace");
  MutationResult res;
  const double t0 = trace.packets.front().timestamp;
  const TrafficTrace rel = to_relative(trace, t0);
  const OverheadBudget eff = effective_budget(c.budget, rel.elapsed());
  PsoConfig pc = c.pso;
  pc.seed = derive_seed(c.seed, std::string(tag) + "/pso");
  auto rng = stage_rng(c.seed, std::string(tag) + "/mutation");

  if (kind == AttackKind::kGanPso) {
    enter_stage(log, "gan");
    auto af = gan_adversarial(view, c, tag);
    res.targets = std::move(af.adver);
    res.gan_history = std::move(af.history);
    res.targets_adversarial = true;
  } else {
    res.targets = subsample_rows(view.ben, std::max<std::size_t>(1, c.n_adver), rng);
  }

  TrafficTrace mutated;
  switch (kind) {
    case AttackKind::kGanPso:
    case AttackKind::kPsoOnly:
      enter_stage(log, "pso");
      mutated = pso_mutate_segments(
          rel, eff, pc, c.segment, view.surrogate,
          [&](const PacketExtractor& s) { return distance_fitness(s, view.norm, res.targets, c.k_nearest); }, &res.pso);
      break;
    case AttackKind::kTwa:
      if (!nids) throw std::invalid_argument("TWA needs the target detector");
      enter_stage(log, "pso");
      mutated = pso_mutate_segments(rel, eff, pc, c.segment, nids->extractor,
                                    [&](const PacketExtractor& s) { return detector_fitness(s, *nids); }, &res.pso);
      break;
    case AttackKind::kRandomSt:
      enter_stage(log, "mutate");
      mutated = random_st(rel, eff, rng);
      break;
    case AttackKind::kRandomDup:
      enter_stage(log, "mutate");
      mutated = random_dup(rel, eff, rng);
      break;
  }
  enter_stage(log, "safety");
  res.mutated = canonicalize(from_relative(mutated, t0));
  res.safety = check_safety(trace, res.mutated, c.budget);
  if (!res.safety.ok())
    throw BudgetViolation("attack output fails safety check: " +
                          (res.safety.violations.empty() ? std::string("?") : res.safety.violations.front()));
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation

struct PacketScores {
  Vec original;              // per original malicious packet
  Vec mutated;               // per packet of the mutated trace
  std::vector<int> crafted;  // 1 where the mutated packet is crafted
};

inline EvaluationReport evaluate_attack(const TargetNids& nids, const TrafficTrace& original,
                                        const TrafficTrace& mutated, const AttackerView& view, const Matrix& reference,
                                        PacketScores* scores_out = nullptr) {
  PacketScores ps;
  ps.original = nids.scores(nids.raw_features(original));
  ps.mutated = nids.scores(nids.raw_features(mutated));
  EvaluationReport r;
  Vec paired;
  for (std::size_t i = 0; i < mutated.size(); ++i) {
    const bool crafted = mutated.packets[i].provenance == Provenance::kCrafted;
    ps.crafted.push_back(crafted ? 1 : 0);
    const bool hit = nids.flags(ps.mutated[i]);
    if (crafted) r.pos_hat_craft += hit;
    else {
      r.pos_hat_mal += hit;
      paired.push_back(ps.mutated[i]);
    }
  }
  if (paired.size() != ps.original.size()) throw TrafficError("evaluate: mutated trace lost original packets");
  for (double s : ps.original) r.pos += nids.flags(s);
  r.pos_hat = r.pos_hat_mal + r.pos_hat_craft;
  r.der = der(r.pos, r.pos_hat);
  r.mer = mer(r.pos, r.pos_hat_mal);
  std::size_t pdr_skipped = 0, mmr_skipped = 0;
  r.pdr = pdr(ps.original, paired, &pdr_skipped);
  const auto featurize = packet_featurizer(PacketExtractor(view.surrogate), view.norm);
  r.mmr = mmr(featurize(original), featurize(mutated), reference, &mmr_skipped);
  r.meta["pdr_skipped"] = pdr_skipped;
  r.meta["mmr_skipped"] = mmr_skipped;
  r.meta["threshold"] = nids.threshold();
  if (scores_out) *scores_out = std::move(ps);
  return r;
}

inline void attach_prf1(EvaluationReport& r, const Prf1& p) {
  r.precision = p.precision;
  r.recall = p.recall;
  r.f1 = p.f1;
}

// Scenario and target detector, shared by every attack kind under one seed.
struct Prepared {
  Scenario scenario;
  TargetNids nids;
  Prf1 clean;
};

inline Prepared prepare(const ExperimentConfig& c, StageLog* log = nullptr) {
  c.validate();
  require_packet_extractor(c);
  Prepared p;
  enter_stage(log, "traffic");
  p.scenario = load_scenario(c);
  enter_stage(log, "train-nids");
  p.nids = train_nids(c, p.scenario);
  p.clean = clean_prf1(p.nids, p.scenario);
  return p;
}

struct AttackRun {
  AttackerView view;
  MutationResult mutation;
  EvaluationReport report;
  PacketScores scores;
};

inline nlohmann::json report_meta(const ExperimentConfig& c, const MutationResult& m) {
  return {{"attack", to_string(c.attack)},
          {"seed", c.seed},
          {"detector", to_string(c.detector)},
          {"knowledge_fraction", c.knowledge_fraction},
          {"budget", {{"l_c", c.budget.l_c}, {"l_t", c.budget.l_t}}},
          {"n_targets", m.targets.size()},
          {"mmr_reference", m.targets_adversarial ? "adversarial" : "benign"},
          {"crafted", m.safety.crafted_count},
          {"craft_limit", m.safety.craft_limit},
          {"elapsed_ratio", m.safety.elapsed_ratio}};
}

inline AttackRun run_attack(const ExperimentConfig& c, const Prepared& p, StageLog* log = nullptr) {
  c.validate();
  AttackRun run;
  enter_stage(log, "attacker-view");
  run.view = make_attacker_view(c, p.scenario.attacker_benign, p.scenario.malicious, c.knowledge_fraction, "attack");
  run.mutation = mutate_traffic(c.attack, c, run.view, p.scenario.malicious, &p.nids, "attack", log);
  enter_stage(log, "evaluate");
  run.report = evaluate_attack(p.nids, p.scenario.malicious, run.mutation.mutated, run.view, run.mutation.targets,
                               &run.scores);
  attach_prf1(run.report, p.clean);
  run.report.meta.update(report_meta(c, run.mutation));
  return run;
}

inline AttackRun run_attack(const ExperimentConfig& c, StageLog* log = nullptr) {
  const Prepared p = prepare(c, log);
  return run_attack(c, p, log);
}

// ---------------------------------------------------------------------------
// Defense

enum class DefenseKind { kAt, kFs, kAfr };

inline std::string to_string(DefenseKind k) {
  return k == DefenseKind::kAt ? "AT" : k == DefenseKind::kFs ? "FS" : "AFR";
}

inline DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "AT") return DefenseKind::kAt;
  if (s == "FS") return DefenseKind::kFs;
  if (s == "AFR") return DefenseKind::kAfr;
  throw ConfigError("unknown defense: " + s);
}

// The defender attacks itself with full feature knowledge, using its own
// benign training capture and labeled malicious capture. Rows are raw target
// features so they can be fed to the detector directly.
struct DefenderSimulation {
  Matrix f_mal, f_hat, adver;
};

inline DefenderSimulation simulate_pga(const ExperimentConfig& c, const Prepared& p) {
  const AttackerView v = make_attacker_view(c, p.scenario.benign_train, p.scenario.malicious_train, 1.0, "defender");
  const MutationResult m = mutate_traffic(AttackKind::kGanPso, c, v, p.scenario.malicious_train, nullptr, "defender");
  DefenderSimulation sim;
  sim.f_mal = p.nids.raw_features(p.scenario.malicious_train);
  const Matrix all = p.nids.raw_features(m.mutated);
  for (std::size_t i = 0; i < all.size(); ++i)
    if (m.mutated.packets[i].provenance == Provenance::kOriginal) sim.f_hat.push_back(all[i]);
  sim.adver = denormalize_matrix(m.targets, v.norm);
  return sim;
}

struct DefenseResult {
  DefenseKind kind = DefenseKind::kAfr;
  double retain = 1.0;
  EvaluationReport before, after;
  DimMask mask;              // retained dimensions (FS, AFR)
  RobustnessScores scores;   // AFR only
  TargetNids defended;
  nlohmann::json deltas;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"defense", to_string(kind)},
                        {"retain", retain},
                        {"before", before.to_json()},
                        {"after", after.to_json()},
                        {"deltas", deltas}};
    if (!mask.empty()) j["retained_dims"] = mask_indices(mask);
    return j;
  }
};

// Improvements are before - after for the attack metrics (positive = more
// robust); d_f1 is after - before on clean traffic.
inline nlohmann::json defense_deltas(const EvaluationReport& b, const EvaluationReport& a) {
  return {{"d_der", b.der - a.der}, {"d_mer", b.mer - a.mer}, {"d_pdr", b.pdr - a.pdr},
          {"d_mmr", b.mmr - a.mmr}, {"d_f1", a.f1 - b.f1}};
}

inline DefenseResult run_defense(const ExperimentConfig& c, const Prepared& p, const AttackRun& attack, DefenseKind kind,
                                 double retain, StageLog* log = nullptr) {
  DefenseResult d;
  d.kind = kind;
  d.retain = retain;
  d.before = attack.report;
  auto rng = stage_rng(c.seed, "defense/" + to_string(kind));
  switch (kind) {
    case DefenseKind::kAfr: {
      enter_stage(log, "defender-simulation");
      const DefenderSimulation sim = simulate_pga(c, p);
      enter_stage(log, "robustness-scores");
      d.scores = adversarial_feature_scores(sim.f_mal, sim.f_hat, sim.adver, {},
                                            [&](const Vec& f) { return p.nids.score(f); }, p.nids.threshold());
      d.mask = afr_reduce(d.scores, retain);
      enter_stage(log, "retrain");
      d.defended = train_nids(c, p.scenario, d.mask);
      break;
    }
    case DefenseKind::kFs: {
      enter_stage(log, "feature-selection");
      TrainingData labeled{p.nids.raw_features(p.scenario.benign_train), {}};
      labeled.y.assign(labeled.X.size(), 0);
      for (auto& r : p.nids.raw_features(p.scenario.malicious_train)) {
        labeled.X.push_back(std::move(r));
        labeled.y.push_back(1);
      }
      d.mask = feature_selection_l1(labeled, retain, rng);
      enter_stage(log, "retrain");
      d.defended = train_nids(c, p.scenario, d.mask);
      break;
    }
    case DefenseKind::kAt: {
      enter_stage(log, "defender-simulation");
      const DefenderSimulation sim = simulate_pga(c, p);
      enter_stage(log, "retrain");
      TargetNids base;
      auto at = adversarial_training(c.detector, nids_training_data(base, c, p.scenario), sim.adver, c.detector_params,
                                     rng, c.percentile);
      d.defended = base;
      d.defended.detector = std::move(at.detector);
      break;
    }
  }
  enter_stage(log, "re-attack");
  // Only TWA consults the detector; the other attacks replay to the same trace.
  const MutationResult rerun = c.attack == AttackKind::kTwa
                                   ? mutate_traffic(c.attack, c, attack.view, p.scenario.malicious, &d.defended, "attack")
                                   : attack.mutation;
  d.after = evaluate_attack(d.defended, p.scenario.malicious, rerun.mutated, attack.view, rerun.targets);
  attach_prf1(d.after, clean_prf1(d.defended, p.scenario));
  d.after.meta["defense"] = to_string(kind);
  d.deltas = defense_deltas(d.before, d.after);
  return d;
}

}  // namespace tmut
