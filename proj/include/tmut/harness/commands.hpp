#pragma once

// Subcommands behind the CLI. Each one writes its artifacts under the output
// directory and always leaves a manifest.json, also on failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tmut/core/trace_csv.hpp"
#include "tmut/harness/correlation.hpp"
#include "tmut/harness/manifest.hpp"
#include "tmut/harness/pipeline.hpp"

namespace tmut {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPipeline = 3;

struct CommandOptions {
  std::string config;  // JSON file; empty = defaults
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string defense = "AFR";
  double retain = 0.8;
  std::vector<std::string> inputs;  // run directories for `report`
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth",  "extract", "train-nids", "train-gan",
                                              "attack", "defend",  "correlate",  "report"};
  return names;
}

namespace cmd_detail {

inline std::string bytes_of(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

inline std::string scenario_name(int i) {
  static const char* names[] = {"benign_train", "benign_val", "benign_test", "attacker_benign", "malicious",
                                "malicious_train"};
  return names[i];
}

inline std::vector<const TrafficTrace*> scenario_traces(const Scenario& s) {
  return {&s.benign_train, &s.benign_val, &s.benign_test, &s.attacker_benign, &s.malicious, &s.malicious_train};
}

inline std::string gan_history_csv(const GanHistory& h) {
  std::ostringstream os;
  os << "epoch,d_loss,g_loss\n";
  for (std::size_t e = 0; e < h.d_loss.size(); ++e)
    os << e << ',' << format_double(h.d_loss[e]) << ',' << format_double(h.g_loss[e]) << '\n';
  return os.str();
}

inline std::string pso_history_csv(const std::vector<SegmentHistory>& segs) {
  std::ostringstream os;
  os << "segment,first_packet,iteration,global_best_fit\n";
  for (std::size_t k = 0; k < segs.size(); ++k)
    for (std::size_t i = 0; i < segs[k].history.size(); ++i)
      os << k << ',' << segs[k].first_packet << ',' << i << ',' << format_double(segs[k].history[i]) << '\n';
  return os.str();
}

inline std::string packet_scores_csv(const PacketScores& ps, double threshold) {
  std::ostringstream os;
  os << "trace,index,score,crafted,flagged\n";
  for (std::size_t i = 0; i < ps.original.size(); ++i)
    os << "original," << i << ',' << format_double(ps.original[i]) << ",0," << (ps.original[i] > threshold) << '\n';
  for (std::size_t i = 0; i < ps.mutated.size(); ++i)
    os << "mutated," << i << ',' << format_double(ps.mutated[i]) << ',' << ps.crafted[i] << ','
       << (ps.mutated[i] > threshold) << '\n';
  return os.str();
}

inline void write_mutation(RunManifest& m, const MutationResult& r, const AttackerView& v) {
  m.write("mutated.pcap", bytes_of(serialize_pcap(r.mutated)));
  m.write("mutated_trace.csv", trace_to_csv(r.mutated));
  if (!r.pso.empty()) m.write("pso_history.csv", pso_history_csv(r.pso));
  if (r.targets_adversarial) {
    m.write("adversarial_features.csv", features_to_csv({feature_names(v.surrogate), r.targets}));
    m.write("gan_history.csv", gan_history_csv(r.gan_history));
  }
}

inline void cmd_synth(const ExperimentConfig& c, RunManifest& m, StageLog& log) {
  log.enter("traffic");
  const Scenario s = load_scenario(c);
  const auto traces = scenario_traces(s);
  for (int i = 0; i < static_cast<int>(traces.size()); ++i)
    m.write(scenario_name(i) + ".pcap", bytes_of(serialize_pcap(*traces[i])));
}

inline void cmd_extract(const ExperimentConfig& c, RunManifest& m, StageLog& log) {
  log.enter("traffic");
  const Scenario s = load_scenario(c);
  log.enter("extract");
  const auto traces = scenario_traces(s);
  for (int i : {0, 4}) {
    if (c.extractor == ExtractorKind::kFlow) {
      FeatureTable t{flow_feature_names(), {}};
      for (auto& [rec, f] : flow_extract(*traces[i])) t.rows.push_back(std::move(f));
      m.write(scenario_name(i) + "_flows.csv", features_to_csv(t));
    } else {
      const ExtractorConfig cfg = target_extractor_config();
      m.write(scenario_name(i) + "_features.csv",
              features_to_csv({feature_names(cfg), packet_extract_trace(cfg, *traces[i])}));
    }
  }
}

inline void cmd_train_nids(const ExperimentConfig& c, RunManifest& m, StageLog& log) {
  const Prepared p = prepare(c, &log);
  log.enter("write");
  m.write_json("nids.json", {{"detector", p.nids.detector.to_json()}, {"mask", mask_indices(p.nids.mask)}});
  m.write_json("nids_report.json", {{"threshold", p.nids.threshold()},
                                    {"percentile", c.percentile},
                                    {"precision", p.clean.precision},
                                    {"recall", p.clean.recall},
                                    {"f1", p.clean.f1}});
  std::ostringstream os;
  os << "trace,index,score,flagged\n";
  for (const auto& [name, t] : {std::pair{"benign_test", &p.scenario.benign_test},
                                std::pair{"malicious", &p.scenario.malicious}}) {
    const Vec sc = p.nids.scores(p.nids.raw_features(*t));
    for (std::size_t i = 0; i < sc.size(); ++i)
      os << name << ',' << i << ',' << format_double(sc[i]) << ',' << p.nids.flags(sc[i]) << '\n';
  }
  m.write("nids_scores.csv", os.str());
}

inline void cmd_train_gan(const ExperimentConfig& c, RunManifest& m, StageLog& log) {
  log.enter("traffic");
  const Scenario s = load_scenario(c);
  log.enter("attacker-view");
  const AttackerView v = make_attacker_view(c, s.attacker_benign, s.malicious, c.knowledge_fraction, "attack");
  log.enter("gan");
  const AdversarialFeatures af = gan_adversarial(v, c, "attack");
  m.write_json("gan.json", af.gan.to_json());
  m.write("gan_history.csv", gan_history_csv(af.history));
  m.write("adversarial_features.csv", features_to_csv({feature_names(v.surrogate), af.adver}));
}

inline void cmd_attack(const ExperimentConfig& c, RunManifest& m, StageLog& log) {
  const Prepared p = prepare(c, &log);
  const AttackRun run = run_attack(c, p, &log);
  log.enter("write");
  m.write_json("report.json", run.report.to_json());
  m.write("packet_scores.csv", packet_scores_csv(run.scores, p.nids.threshold()));
  write_mutation(m, run.mutation, run.view);
}

inline void cmd_defend(const ExperimentConfig& c, const CommandOptions& o, RunManifest& m, StageLog& log) {
  const DefenseKind kind = defense_kind_from_string(o.defense);
  if (!(o.retain > 0.0 && o.retain <= 1.0)) throw ConfigError("defend: retain must lie in (0, 1]");
  const Prepared p = prepare(c, &log);
  const AttackRun run = run_attack(c, p, &log);
  const DefenseResult d = run_defense(c, p, run, kind, o.retain, &log);
  log.enter("write");
  m.write_json("defense.json", d.to_json());
  m.write_json("report.json", run.report.to_json());
  if (kind == DefenseKind::kAfr)
    m.write("robustness_scores.csv", scores_to_csv(d.scores, feature_names(target_extractor_config())));
  write_mutation(m, run.mutation, run.view);
}

inline void cmd_correlate(const ExperimentConfig& c, RunManifest& m, StageLog& log) {
  log.enter("traffic");
  const Scenario s = load_scenario(c);
  const CorrelationResult r = correlate(c, s, &log);
  log.enter("write");
  m.write("correlation_samples.csv", correlation_samples_to_csv(r.samples));
  m.write_json("correlation.json", {{"pcc", r.pcc},
                                    {"n_valid", r.n_valid},
                                    {"n_samples", r.samples.size()},
                                    {"band", {c.correlation.band_lo, c.correlation.band_hi}},
                                    {"validity", c.correlation.validity}});
}

inline double median_of(Vec v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One row per attack report found in the input run directories, plus
// per-attack medians.
inline void cmd_report(const CommandOptions& o, RunManifest& m, StageLog& log) {
  log.enter("collect");
  if (o.inputs.empty()) throw ConfigError("report: give at least one run directory");
  std::ostringstream csv;
  csv << "run,attack,seed,pos,pos_hat,der,mer,pdr,mmr,f1\n";
  std::map<std::string, std::map<std::string, Vec>> by_attack;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& dir : o.inputs) {
    const auto path = std::filesystem::path(dir) / "report.json";
    if (!std::filesystem::exists(path)) throw std::runtime_error("report: missing " + path.string());
    const EvaluationReport r = EvaluationReport::from_json(nlohmann::json::parse(read_text(path.string())));
    const std::string attack = r.meta.value("attack", std::string("?"));
    csv << dir << ',' << attack << ',' << r.meta.value("seed", std::uint64_t{0}) << ',' << r.pos << ','
        << r.pos_hat << ',' << format_double(r.der) << ',' << format_double(r.mer) << ',' << format_double(r.pdr)
        << ',' << format_double(r.mmr) << ',' << format_double(r.f1) << '\n';
    auto& acc = by_attack[attack];
    for (const auto& [k, v] : {std::pair{"der", r.der}, {"mer", r.mer}, {"pdr", r.pdr}, {"mmr", r.mmr}})
      acc[k].push_back(v);
    nlohmann::json entry = {{"run", dir}, {"report", r.to_json()}};
    const auto def = std::filesystem::path(dir) / "defense.json";
    if (std::filesystem::exists(def)) entry["deltas"] = nlohmann::json::parse(read_text(def.string())).at("deltas");
    runs.push_back(std::move(entry));
  }
  nlohmann::json medians = nlohmann::json::object();
  for (const auto& [attack, acc] : by_attack) {
    nlohmann::json j = {{"runs", acc.at("mer").size()}};
    for (const auto& [k, v] : acc) j[k] = median_of(v);
    medians[attack] = j;
  }
  log.enter("write");
  m.write("summary.csv", csv.str());
  m.write_json("summary.json", {{"medians", medians}, {"runs", runs}});
}

inline std::filesystem::path resolve_out(const CommandOptions& o, const nlohmann::json& raw) {
  if (o.out) return *o.out;
  if (raw.is_object() && raw.contains("out") && raw.at("out").is_string()) return raw.at("out").get<std::string>();
  return "out";
}

}  // namespace cmd_detail

// Runs one subcommand; returns the process exit code. Diagnostics go to `err`.
inline int run_command(const std::string& name, const CommandOptions& o, std::ostream& err) {
  using namespace cmd_detail;
  nlohmann::json raw = nlohmann::json::object();
  std::string load_error;
  if (!o.config.empty()) {
    try {
      raw = nlohmann::json::parse(read_text(o.config));
    } catch (const std::exception& e) {
      load_error = std::string("config: ") + e.what();
    }
  }
  RunManifest m(resolve_out(o, raw), name);
  auto finish = [&](int code, const std::string& status, const std::string& stage, const std::string& what) {
    if (code != kExitOk) {
      m.fail(status, stage, what);
      err << "error [" << stage << "]: " << what << '\n';
    }
    try {
      m.save();
    } catch (const std::exception& e) {
      err << "error: cannot write manifest: " << e.what() << '\n';
      return code == kExitOk ? kExitPipeline : code;
    }
    return code;
  };

  if (std::find(command_names().begin(), command_names().end(), name) == command_names().end())
    return finish(kExitConfig, "config_error", "config", "unknown command '" + name + "'");
  if (!load_error.empty()) return finish(kExitConfig, "config_error", "config", load_error);

  ExperimentConfig c;
  try {
    if (o.seed) raw["seed"] = *o.seed;
    if (o.out) raw["out"] = *o.out;
    c = config_from_json(raw);
  } catch (const std::exception& e) {
    return finish(kExitConfig, "config_error", "config", e.what());
  }
  m.set_config(to_json(c));
  m.set_seed(c.seed);

  StageLog log;
  try {
    if (name == "synth") cmd_synth(c, m, log);
    else if (name == "extract") cmd_extract(c, m, log);
    else if (name == "train-nids") cmd_train_nids(c, m, log);
    else if (name == "train-gan") cmd_train_gan(c, m, log);
    else if (name == "attack") cmd_attack(c, m, log);
    else if (name == "defend") cmd_defend(c, o, m, log);
    else if (name == "correlate") cmd_correlate(c, m, log);
    else cmd_report(o, m, log);
  } catch (const ConfigError& e) {
    return finish(kExitConfig, "config_error", log.current.empty() ? "config" : log.current, e.what());
  } catch (const std::exception& e) {
    return finish(kExitPipeline, "failed", log.current.empty() ? name : log.current, e.what());
  }
  return finish(kExitOk, "ok", "", "");
}

}  // namespace tmut
