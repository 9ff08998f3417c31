#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tmut/core/meta_info.hpp"
#include "tmut/gan/gan.hpp"
#include "tmut/harness/synth.hpp"
#include "tmut/models/detector.hpp"
#include "tmut/pso/pso.hpp"

namespace tmut {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AttackKind { kGanPso, kPsoOnly, kRandomSt, kRandomDup, kTwa };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kGanPso: return "GAN_PSO";
    case AttackKind::kPsoOnly: return "PSO_ONLY";
    case AttackKind::kRandomSt: return "RANDOM_ST";
    case AttackKind::kRandomDup: return "RANDOM_DUP";
    case AttackKind::kTwa: return "TWA";
  }
  return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  for (auto k : {AttackKind::kGanPso, AttackKind::kPsoOnly, AttackKind::kRandomSt, AttackKind::kRandomDup, AttackKind::kTwa})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown attack kind: " + s);
}

// Synthetic generation unless `benign_pcap` is set. A benign capture is split
// in time order into train / validation / test / attacker portions.
struct TrafficSource {
  SynthSpec benign = default_benign_spec();
  MaliciousKind malicious_kind = MaliciousKind::kScan;
  SynthSpec malicious = default_malicious_spec(MaliciousKind::kScan);
  std::string benign_pcap;
  std::string malicious_pcap;
  std::string attacker_benign_pcap;

  bool synthetic() const { return benign_pcap.empty(); }
};

// Distance-versus-overhead study. Distances are in normalized feature units.
struct CorrelationOptions {
  std::size_t n_mal = 40;        // malicious packets to study
  std::size_t targets_per = 5;   // targets per malicious packet
  double band_lo = 0.5;
  double band_hi = 5.0;
  double validity = 0.7;         // required proximity 1 - L(E(t'), f_tar) / L(f_mal, f_tar)
  std::size_t window = 10;       // packets mutated to move the last one
  std::size_t candidates = 64;   // random mutants per packet from which targets are picked
  std::size_t n_iter = 20;       // PSO iterations per target

  void validate() const {
    if (n_mal < 10) throw std::invalid_argument("correlation: n_mal must be >= 10");
    if (targets_per < 1) throw std::invalid_argument("correlation: targets_per must be >= 1");
    if (!(band_lo >= 0.0 && band_hi > band_lo)) throw std::invalid_argument("correlation: need 0 <= band_lo < band_hi");
    if (!(validity >= 0.0 && validity < 1.0)) throw std::invalid_argument("correlation: validity must lie in [0, 1)");
    if (window < 1) throw std::invalid_argument("correlation: window must be >= 1");
    if (candidates < targets_per) throw std::invalid_argument("correlation: candidates must be >= targets_per");
  }
};

struct ExperimentConfig {
  TrafficSource traffic;
  ExtractorKind extractor = ExtractorKind::kPacketDamped;
  double knowledge_fraction = 1.0;
  DetectorKind detector = DetectorKind::kEnsembleAutoencoder;
  DetectorParams detector_params;
  double percentile = 99.0;
  GanConfig gan;
  PsoConfig pso;
  std::size_t segment = 2;  // original packets per PSO sub-problem
  std::size_t k_nearest = 10;
  std::size_t n_adver = 200;
  CorrelationOptions correlation;
  OverheadBudget budget{0.5, 5.0};
  AttackKind attack = AttackKind::kGanPso;
  std::uint64_t seed = 1;
  std::string out = "out";

  void validate() const {
    try {
      traffic.benign.validate();
      traffic.malicious.validate();
      budget.validate();
      gan.validate();
      pso.validate();
      correlation.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (traffic.synthetic() && !traffic.malicious_pcap.empty())
      throw ConfigError("traffic: malicious_pcap requires benign_pcap");
    if (!traffic.synthetic() && traffic.malicious_pcap.empty())
      throw ConfigError("traffic: benign_pcap requires malicious_pcap");
    if (!(knowledge_fraction >= 0.0 && knowledge_fraction <= 1.0))
      throw ConfigError("extractor: knowledge_fraction must lie in [0, 1]");
    if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("detector: percentile must lie in (0, 100]");
    if (segment < 1) throw ConfigError("pso: segment must be >= 1");
    if (attack == AttackKind::kGanPso && n_adver < 1) throw ConfigError("n_adver must be >= 1 for GAN_PSO");
  }
};

// Independent stream per pipeline stage, stable under reordering of stages.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  std::uint32_t h = 2166136261u;
  for (char c : stage) h = (h ^ static_cast<std::uint8_t>(c)) * 16777619u;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), h};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

inline Rng stage_rng(std::uint64_t seed, std::string_view stage) { return Rng(derive_seed(seed, stage)); }

namespace config_detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> keys, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace config_detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using config_detail::reject_unknown;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  try {
    reject_unknown(j,
                   {"traffic", "extractor", "detector", "gan", "pso", "n_adver", "correlation", "budget", "attack", "seed", "out"},
                   "config");
    if (j.contains("traffic")) {
      const auto& t = j.at("traffic");
      reject_unknown(t, {"benign", "malicious", "benign_pcap", "malicious_pcap", "attacker_benign_pcap"}, "traffic");
      if (t.contains("malicious")) {
        const auto& m = t.at("malicious");
        c.traffic.malicious_kind = malicious_kind_from_string(m.value("kind", std::string("SCAN")));
        c.traffic.malicious = synth_spec_from_json(m, default_malicious_spec(c.traffic.malicious_kind));
      }
      if (t.contains("benign")) c.traffic.benign = synth_spec_from_json(t.at("benign"), c.traffic.benign);
      c.traffic.benign_pcap = t.value("benign_pcap", std::string());
      c.traffic.malicious_pcap = t.value("malicious_pcap", std::string());
      c.traffic.attacker_benign_pcap = t.value("attacker_benign_pcap", std::string());
    }
    if (j.contains("extractor")) {
      const auto& e = j.at("extractor");
      reject_unknown(e, {"kind", "knowledge_fraction"}, "extractor");
      const auto kind = e.value("kind", std::string("packet"));
      if (kind == "packet") c.extractor = ExtractorKind::kPacketDamped;
      else if (kind == "flow") c.extractor = ExtractorKind::kFlow;
      else throw ConfigError("extractor: unknown kind '" + kind + "'");
      c.knowledge_fraction = e.value("knowledge_fraction", c.knowledge_fraction);
    }
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      reject_unknown(d, {"kind", "percentile", "m_max", "epochs", "lr", "l1", "n_trees", "subsample"}, "detector");
      c.detector = detector_kind_from_string(d.value("kind", std::string("kitnet")));
      c.percentile = d.value("percentile", c.percentile);
      auto& p = c.detector_params;
      p.m_max = d.value("m_max", p.m_max);
      p.epochs = d.value("epochs", p.epochs);
      p.lr = d.value("lr", p.lr);
      p.l1 = d.value("l1", p.l1);
      p.n_trees = d.value("n_trees", p.n_trees);
      p.subsample = d.value("subsample", p.subsample);
    }
    if (j.contains("gan")) {
      const auto& g = j.at("gan");
      reject_unknown(g, {"objective", "noise_dim", "epochs", "batch", "lr"}, "gan");
      const auto obj = g.value("objective", std::string("non_saturating"));
      if (obj == "paper") c.gan.objective = GeneratorObjective::kPaper;
      else if (obj == "non_saturating") c.gan.objective = GeneratorObjective::kNonSaturating;
      else throw ConfigError("gan: unknown objective '" + obj + "'");
      c.gan.noise_dim = g.value("noise_dim", c.gan.noise_dim);
      c.gan.epochs = g.value("epochs", c.gan.epochs);
      c.gan.batch = g.value("batch", c.gan.batch);
      c.gan.lr = g.value("lr", c.gan.lr);
    }
    if (j.contains("pso")) {
      const auto& p = j.at("pso");
      reject_unknown(p, {"n_iter", "n_swarm", "m", "omega", "c1", "c2", "segment", "k_nearest"}, "pso");
      c.pso.n_iter = p.value("n_iter", c.pso.n_iter);
      c.pso.n_swarm = p.value("n_swarm", c.pso.n_swarm);
      c.pso.m = p.value("m", c.pso.m);
      c.pso.omega = p.value("omega", c.pso.omega);
      c.pso.c1 = p.value("c1", c.pso.c1);
      c.pso.c2 = p.value("c2", c.pso.c2);
      c.segment = p.value("segment", c.segment);
      c.k_nearest = p.value("k_nearest", c.k_nearest);
    }
    if (j.contains("correlation")) {
      const auto& k = j.at("correlation");
      reject_unknown(k, {"n_mal", "targets_per", "band", "validity", "window", "candidates", "n_iter"}, "correlation");
      auto& o = c.correlation;
      o.n_mal = k.value("n_mal", o.n_mal);
      o.targets_per = k.value("targets_per", o.targets_per);
      if (k.contains("band")) {
        const auto band = k.at("band").get<std::vector<double>>();
        if (band.size() != 2) throw ConfigError("correlation: band must be [lo, hi]");
        o.band_lo = band[0];
        o.band_hi = band[1];
      }
      o.validity = k.value("validity", o.validity);
      o.window = k.value("window", o.window);
      o.candidates = k.value("candidates", o.candidates);
      o.n_iter = k.value("n_iter", o.n_iter);
    }
    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      reject_unknown(b, {"l_c", "l_t"}, "budget");
      c.budget.l_c = b.value("l_c", c.budget.l_c);
      c.budget.l_t = b.value("l_t", c.budget.l_t);
    }
    c.n_adver = j.value("n_adver", c.n_adver);
    if (j.contains("attack")) c.attack = attack_kind_from_string(j.at("attack").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json traffic = {{"benign", to_json(c.traffic.benign)}};
  traffic["malicious"] = to_json(c.traffic.malicious);
  traffic["malicious"]["kind"] = to_string(c.traffic.malicious_kind);
  if (!c.traffic.synthetic()) {
    traffic["benign_pcap"] = c.traffic.benign_pcap;
    traffic["malicious_pcap"] = c.traffic.malicious_pcap;
    if (!c.traffic.attacker_benign_pcap.empty()) traffic["attacker_benign_pcap"] = c.traffic.attacker_benign_pcap;
  }
  const auto& p = c.detector_params;
  return {
      {"traffic", traffic},
      {"extractor",
       {{"kind", c.extractor == ExtractorKind::kFlow ? "flow" : "packet"}, {"knowledge_fraction", c.knowledge_fraction}}},
      {"detector",
       {{"kind", to_string(c.detector)},
        {"percentile", c.percentile},
        {"m_max", p.m_max},
        {"epochs", p.epochs},
        {"lr", p.lr},
        {"l1", p.l1},
        {"n_trees", p.n_trees},
        {"subsample", p.subsample}}},
      {"gan",
       {{"objective", c.gan.objective == GeneratorObjective::kPaper ? "paper" : "non_saturating"},
        {"noise_dim", c.gan.noise_dim},
        {"epochs", c.gan.epochs},
        {"batch", c.gan.batch},
        {"lr", c.gan.lr}}},
      {"pso",
       {{"n_iter", c.pso.n_iter},
        {"n_swarm", c.pso.n_swarm},
        {"m", c.pso.m},
        {"omega", c.pso.omega},
        {"c1", c.pso.c1},
        {"c2", c.pso.c2},
        {"segment", c.segment},
        {"k_nearest", c.k_nearest}}},
      {"n_adver", c.n_adver},
      {"correlation",
       {{"n_mal", c.correlation.n_mal},
        {"targets_per", c.correlation.targets_per},
        {"band", {c.correlation.band_lo, c.correlation.band_hi}},
        {"validity", c.correlation.validity},
        {"window", c.correlation.window},
        {"candidates", c.correlation.candidates},
        {"n_iter", c.correlation.n_iter}}},
      {"budget", {{"l_c", c.budget.l_c}, {"l_t", c.budget.l_t}}},
      {"attack", to_string(c.attack)},
      {"seed", c.seed},
      {"out", c.out}};
}

}  // namespace tmut
