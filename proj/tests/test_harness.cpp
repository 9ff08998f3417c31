#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "tmut/harness/commands.hpp"

using namespace tmut;
namespace fs = std::filesystem;

namespace {

// Small enough for unit tests, large enough that the detector fires.
nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "traffic": {"benign": {"packets": 800}, "malicious": {"packets": 120}},
    "n_adver": 30,
    "correlation": {"n_mal": 10, "targets_per": 3, "candidates": 24, "n_iter": 8}
  })");
}

ExperimentConfig small(std::uint64_t seed = 1, const char* attack = "RANDOM_ST") {
  auto j = small_config();
  j["seed"] = seed;
  j["attack"] = attack;
  return config_from_json(j);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tmut_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_text(e.path().string());
  return out;
}

std::string write_config(const fs::path& dir, const nlohmann::json& j) {
  const auto p = (dir / "config.json").string();
  write_text(p, j.dump());
  return p;
}

}  // namespace

// --- synthetic traffic ------------------------------------------------------

TEST(Synth, ScanWithHundredPortsHitsHundredDistinctPorts) {
  SynthSpec s = default_malicious_spec(MaliciousKind::kScan);
  s.ports = 100;
  s.packets = 300;
  Rng rng(3);
  const auto t = synth_malicious(MaliciousKind::kScan, s, rng);
  std::set<std::uint16_t> ports;
  for (const auto& p : t.packets) {
    ASSERT_TRUE(p.tcp);
    EXPECT_EQ(p.tcp->flags, tcp_flags::kSyn);
    ports.insert(p.tcp->dst_port);
  }
  EXPECT_EQ(ports.size(), 100u);
}

TEST(Synth, SameSeedSameTrace) {
  Rng a(9), b(9);
  EXPECT_EQ(synth_benign(default_benign_spec(), a).packets, synth_benign(default_benign_spec(), b).packets);
  Rng c(9), d(9);
  const auto spec = default_malicious_spec(MaliciousKind::kFlood);
  EXPECT_EQ(synth_malicious(MaliciousKind::kFlood, spec, c).packets,
            synth_malicious(MaliciousKind::kFlood, spec, d).packets);
}

TEST(Synth, FloodInterarrivalTenTimesBelowBenign) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const double ben = mean_interarrival(synth_benign(default_benign_spec(), rng));
    const double flood =
        mean_interarrival(synth_malicious(MaliciousKind::kFlood, default_malicious_spec(MaliciousKind::kFlood), rng));
    EXPECT_GT(flood, 0.0);
    EXPECT_LE(flood * 10.0, ben) << "seed " << seed;
  }
}

TEST(Synth, BenignMixesTcpAndUdpAndKeepsOrder) {
  Rng rng(4);
  const auto t = synth_benign(default_benign_spec(), rng);
  ASSERT_EQ(t.size(), default_benign_spec().packets);
  std::size_t tcp = 0, udp = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tcp += t.packets[i].tcp.has_value();
    udp += t.packets[i].udp.has_value();
    if (i) EXPECT_LE(t.packets[i - 1].timestamp, t.packets[i].timestamp);
  }
  EXPECT_GT(tcp, 0u);
  EXPECT_GT(udp, 0u);
}

// --- config -----------------------------------------------------------------

TEST(Config, RoundTripsThroughJson) {
  const ExperimentConfig c = small(4, "TWA");
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json({{"pso", {{"speed", 1}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"budget", {{"l_t", 0.5}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"attack", "NOPE"}}), ConfigError);
  EXPECT_THROW(config_from_json({{"n_adver", 0}}), ConfigError);
  EXPECT_THROW(config_from_json({{"correlation", {{"n_mal", 5}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"traffic", {{"malicious", {{"kind", "WORM"}}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
}

TEST(Config, StageSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(7, "nids"), derive_seed(7, "nids"));
  EXPECT_NE(derive_seed(7, "nids"), derive_seed(7, "gan"));
  EXPECT_NE(derive_seed(7, "nids"), derive_seed(8, "nids"));
}

// --- segmented mutation -----------------------------------------------------

TEST(Segments, GapIntoEachSegmentIsMutableAndBudgetHolds) {
  const ExperimentConfig c = small(2);
  const Scenario s = load_scenario(c);
  const TrafficTrace rel = to_relative(s.malicious, s.malicious.packets.front().timestamp);
  const OverheadBudget budget{0.5, 3.0};
  // Fitness rewards late timestamps, so every gap should stretch.
  const FitnessFactory late = [](const PacketExtractor&) {
    return TraceFitness([](const TrafficTrace& t) { return -t.elapsed(); });
  };
  for (std::size_t seg : {1u, 2u, 7u}) {
    PsoConfig pc;
    const TrafficTrace out = pso_mutate_segments(rel, budget, pc, seg, target_extractor_config(), late, nullptr);
    const SafetyReport r = check_safety(rel, out, budget);
    EXPECT_TRUE(r.ok()) << "segment " << seg;
    EXPECT_GT(out.elapsed(), 1.5 * rel.elapsed()) << "segment " << seg;
  }
}

TEST(Segments, CraftHeavyBudgetsNeverLeakTheLeadCopy) {
  // With l_c > 1 every packet has two craft slots, including the lead copy
  // that opens each later segment.
  const ExperimentConfig c = small(3);
  const Scenario s = load_scenario(c);
  const TrafficTrace rel = to_relative(slice(s.malicious, 0, 30), s.malicious.packets.front().timestamp);
  const FitnessFactory crafty = [](const PacketExtractor&) {
    return TraceFitness([](const TrafficTrace& t) { return -static_cast<double>(t.size()); });
  };
  for (double l_c : {1.0, 1.3, 1.9})
    for (std::size_t seg : {1u, 2u, 3u}) {
      const OverheadBudget budget{l_c, 2.0};
      PsoConfig pc;
      pc.seed = seg;
      const TrafficTrace out = pso_mutate_segments(rel, budget, pc, seg, target_extractor_config(), crafty, nullptr);
      const SafetyReport r = check_safety(rel, out, budget);
      EXPECT_TRUE(r.ok()) << "l_c " << l_c << " segment " << seg << ": "
                          << (r.violations.empty() ? "" : r.violations.front());
      EXPECT_GT(r.crafted_count, 0u);
    }
}

// --- attack runs ------------------------------------------------------------

TEST(Attack, ReportIsInternallyConsistent) {
  for (const char* kind : {"RANDOM_ST", "RANDOM_DUP", "PSO_ONLY", "TWA", "GAN_PSO"}) {
    const ExperimentConfig c = small(1, kind);
    const AttackRun run = run_attack(c);
    const auto& r = run.report;
    EXPECT_EQ(r.pos_hat, r.pos_hat_mal + r.pos_hat_craft) << kind;
    EXPECT_LE(r.der, r.mer + 1e-12) << kind;
    EXPECT_TRUE(run.mutation.safety.ok()) << kind;
    EXPECT_EQ(check_safety(load_scenario(c).malicious, run.mutation.mutated, c.budget).ok(), true) << kind;
    EXPECT_EQ(run.scores.mutated.size(), run.mutation.mutated.size()) << kind;
    EXPECT_EQ(r.meta.at("attack"), kind);
  }
}

TEST(Attack, RandomStretchWithUnitTimeBudgetKeepsTiming) {
  auto j = small_config();
  j["attack"] = "RANDOM_ST";
  j["budget"] = {{"l_c", 0.5}, {"l_t", 1.0}};
  const ExperimentConfig c = config_from_json(j);
  const AttackRun run = run_attack(c);
  const Scenario s = load_scenario(c);
  ASSERT_EQ(run.mutation.mutated.size(), s.malicious.size());
  for (std::size_t i = 0; i < s.malicious.size(); ++i)
    EXPECT_EQ(run.mutation.mutated.packets[i].timestamp, s.malicious.packets[i].timestamp);
  EXPECT_EQ(run.report.pos_hat, run.report.pos_hat_mal + run.report.pos_hat_craft);
  EXPECT_EQ(run.report.pos_hat_craft, 0u);
  EXPECT_DOUBLE_EQ(run.report.mer, 0.0);
}

TEST(Attack, FlowExtractorIsRejectedByAttackPipeline) {
  auto j = small_config();
  j["extractor"] = {{"kind", "flow"}};
  EXPECT_THROW(run_attack(config_from_json(j)), ConfigError);
}

TEST(Attack, FullKnowledgeDegradesDetectionAtLeastAsMuchAsNoKnowledge) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto pga = small(seed, "PSO_ONLY");
    auto pba = pga;
    pba.knowledge_fraction = 0.0;
    const Prepared p = prepare(pga);
    const AttackRun a = run_attack(pga, p);
    const AttackRun b = run_attack(pba, p);
    EXPECT_EQ(b.report.pos_hat, b.report.pos_hat_mal + b.report.pos_hat_craft);
    wins += a.report.pdr >= b.report.pdr;
  }
  EXPECT_GE(wins, 7);
}

// --- defense ----------------------------------------------------------------

TEST(Defense, AfrRetainingEverythingChangesNothing) {
  const ExperimentConfig c = small(3, "PSO_ONLY");
  const Prepared p = prepare(c);
  const AttackRun run = run_attack(c, p);
  const DefenseResult d = run_defense(c, p, run, DefenseKind::kAfr, 1.0);
  for (const char* k : {"d_der", "d_mer", "d_pdr", "d_mmr", "d_f1"}) EXPECT_NEAR(d.deltas.at(k).get<double>(), 0.0, 1e-12) << k;
  EXPECT_EQ(d.mask.size(), p.nids.detector.dims());
}

TEST(Defense, ReportCarriesSignedF1Delta) {
  const ExperimentConfig c = small(3, "RANDOM_ST");
  const Prepared p = prepare(c);
  const AttackRun run = run_attack(c, p);
  for (DefenseKind k : {DefenseKind::kAfr, DefenseKind::kFs, DefenseKind::kAt}) {
    const DefenseResult d = run_defense(c, p, run, k, 0.8);
    const nlohmann::json j = d.to_json();
    ASSERT_TRUE(j.at("deltas").contains("d_f1"));
    EXPECT_DOUBLE_EQ(j.at("deltas").at("d_f1").get<double>(), d.after.f1 - d.before.f1);
    if (k != DefenseKind::kAt) EXPECT_EQ(mask_indices(d.mask).size(), retained_count(d.mask.size(), 0.8));
    for (double s : d.scores.s) {
      EXPECT_GE(s, -1.0);
      EXPECT_LE(s, 1.0);
    }
  }
}

// --- correlation ------------------------------------------------------------

TEST(Correlation, PearsonOnLinearAndAntiLinearData) {
  const Vec x{1, 2, 3, 4, 5};
  EXPECT_NEAR(pearson(x, {3, 5, 7, 9, 11}), 1.0, 1e-12);
  EXPECT_NEAR(pearson(x, {-2, -4, -6, -8, -10}), -1.0, 1e-12);
  EXPECT_TRUE(std::isnan(pearson(x, {1, 1, 1, 1, 1})));
  EXPECT_THROW(pearson(x, {1, 2}), DimensionMismatch);
}

TEST(Correlation, PipelinePccMatchesRecomputationFromCsv) {
  const ExperimentConfig c = small(2);
  const CorrelationResult r = correlate(c, load_scenario(c));
  ASSERT_GE(r.n_valid, 10u);
  std::istringstream in(correlation_samples_to_csv(r.samples));
  std::string line;
  std::getline(in, line);
  Vec x, y;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 7u);
    ++rows;
    const double d = std::stod(f[1]), time = std::stod(f[2]), vol = std::stod(f[3]);
    EXPECT_GE(d, c.correlation.band_lo);
    EXPECT_LE(d, c.correlation.band_hi);
    if (f[6] == "1") {
      x.push_back(d);
      y.push_back(time + vol);
    }
  }
  EXPECT_EQ(rows, r.samples.size());
  EXPECT_EQ(x.size(), r.n_valid);
  // Straight two-pass formula, independent of pearson().
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= x.size(), my /= y.size();
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    num += (x[i] - mx) * (y[i] - my), dx += (x[i] - mx) * (x[i] - mx), dy += (y[i] - my) * (y[i] - my);
  EXPECT_NEAR(r.pcc, num / std::sqrt(dx * dy), 1e-12);
}

TEST(Correlation, ValidityFollowsProximityRule) {
  const ExperimentConfig c = small(5);
  const CorrelationResult r = correlate(c, load_scenario(c));
  for (const auto& s : r.samples) {
    EXPECT_NEAR(s.distance, euclidean(s.f_mal, s.f_tar), 1e-12);
    EXPECT_EQ(s.valid, s.proximity > c.correlation.validity);
    EXPECT_GE(s.time_overhead, 1.0 - 1e-12);
    EXPECT_GE(s.volume_overhead, 1.0);
  }
}

TEST(Correlation, TooFewValidSamplesIsReported) {
  auto j = small_config();
  j["correlation"]["validity"] = 0.999;
  j["correlation"]["n_iter"] = 0;
  EXPECT_THROW(correlate(config_from_json(j), load_scenario(config_from_json(j))), TooFewValidSamples);
}

// --- commands and manifest --------------------------------------------------

TEST(Commands, AttackOutputsAreByteDeterministic) {
  const fs::path dir = scratch("determinism");
  auto j = small_config();
  j["attack"] = "GAN_PSO";
  CommandOptions o;
  o.config = write_config(dir, j);
  o.out = (dir / "run").string();
  std::ostringstream err;
  ASSERT_EQ(run_command("attack", o, err), kExitOk) << err.str();
  const auto first = dir_contents(dir / "run");
  for (const char* f : {"manifest.json", "report.json", "mutated.pcap", "packet_scores.csv", "pso_history.csv",
                        "adversarial_features.csv", "gan_history.csv", "mutated_trace.csv"})
    EXPECT_TRUE(first.count(f)) << f;
  fs::remove_all(dir / "run");
  ASSERT_EQ(run_command("attack", o, err), kExitOk) << err.str();
  EXPECT_EQ(dir_contents(dir / "run"), first);

  const auto m = nlohmann::json::parse(first.at("manifest.json"));
  EXPECT_EQ(m.at("status"), "ok");
  for (const auto& a : m.at("artifacts")) {
    const std::string bytes = first.at(a.at("path").get<std::string>());
    EXPECT_EQ(a.at("sha256"), sha256_hex(bytes));
    EXPECT_EQ(a.at("bytes").get<std::size_t>(), bytes.size());
  }
  // The emitted capture passes the safety audit against the attacked trace.
  const TrafficTrace mutated = parse_pcap(std::vector<std::uint8_t>(first.at("mutated.pcap").begin(), first.at("mutated.pcap").end()));
  EXPECT_TRUE(check_safety(load_scenario(config_from_json(j)).malicious, mutated, config_from_json(j).budget).ok());
}

TEST(Commands, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Commands, ManifestWrittenOnPipelineFailure) {
  const fs::path dir = scratch("failure");
  auto j = small_config();
  j["traffic"]["benign_pcap"] = (dir / "missing_benign.pcap").string();
  j["traffic"]["malicious_pcap"] = (dir / "missing_malicious.pcap").string();
  CommandOptions o;
  o.config = write_config(dir, j);
  o.out = (dir / "run").string();
  std::ostringstream err;
  EXPECT_EQ(run_command("attack", o, err), kExitPipeline);
  const auto m = nlohmann::json::parse(read_text((dir / "run" / "manifest.json").string()));
  EXPECT_EQ(m.at("status"), "failed");
  EXPECT_EQ(m.at("failed_stage"), "traffic");
  EXPECT_TRUE(m.at("artifacts").empty());
}

TEST(Commands, ConfigErrorsExitWithTwoAndStillWriteManifest) {
  const fs::path dir = scratch("config_error");
  CommandOptions o;
  o.config = write_config(dir, {{"pso", {{"n_swarm", 0}}}});
  o.out = (dir / "run").string();
  std::ostringstream err;
  EXPECT_EQ(run_command("attack", o, err), kExitConfig);
  auto m = nlohmann::json::parse(read_text((dir / "run" / "manifest.json").string()));
  EXPECT_EQ(m.at("status"), "config_error");
  EXPECT_EQ(m.at("failed_stage"), "config");

  write_text(o.config, "{ not json");
  EXPECT_EQ(run_command("synth", o, err), kExitConfig);
  o.config = write_config(dir, small_config());
  EXPECT_EQ(run_command("defend", [&] { auto p = o; p.retain = 0.0; return p; }(), err), kExitConfig);
}

TEST(Commands, SynthExtractTrainAndReport) {
  const fs::path dir = scratch("commands");
  CommandOptions o;
  auto cfg = small_config();
  cfg["attack"] = "PSO_ONLY";  // keeps the flow independent of GAN filter luck
  o.config = write_config(dir, cfg);
  std::ostringstream err;
  o.out = (dir / "synth").string();
  ASSERT_EQ(run_command("synth", o, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "synth" / "malicious.pcap"));
  o.out = (dir / "extract").string();
  ASSERT_EQ(run_command("extract", o, err), kExitOk) << err.str();
  const auto feats = features_from_csv(read_text((dir / "extract" / "malicious_features.csv").string()));
  EXPECT_EQ(feats.rows.size(), small_config()["traffic"]["malicious"]["packets"].get<std::size_t>());
  o.out = (dir / "nids").string();
  ASSERT_EQ(run_command("train-nids", o, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "nids" / "nids.json"));

  std::vector<std::string> runs;
  for (std::uint64_t seed : {1, 2}) {
    o.seed = seed;
    o.out = (dir / ("run" + std::to_string(seed))).string();
    ASSERT_EQ(run_command("attack", o, err), kExitOk) << err.str();
    runs.push_back(*o.out);
  }
  CommandOptions r;
  r.inputs = runs;
  r.out = (dir / "summary").string();
  ASSERT_EQ(run_command("report", r, err), kExitOk) << err.str();
  const auto summary = nlohmann::json::parse(read_text((dir / "summary" / "summary.json").string()));
  EXPECT_EQ(summary.at("medians").at("PSO_ONLY").at("runs"), 2);
}

#ifdef TMUT_CLI_PATH
TEST(Commands, CliExitCodes) {
  const fs::path dir = scratch("cli");
  const std::string cli = TMUT_CLI_PATH;
  auto code = [](const std::string& cmd) {
    const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  EXPECT_EQ(code(cli + " --help"), 0);
  EXPECT_EQ(code(cli + " bogus"), 2);
  const std::string bad = write_config(dir, {{"unknown", 1}});
  EXPECT_EQ(code(cli + " synth --config " + bad + " --out " + (dir / "a").string()), 2);
  EXPECT_TRUE(fs::exists(dir / "a" / "manifest.json"));
  const std::string good = write_config(dir, small_config());
  EXPECT_EQ(code(cli + " synth --config " + good + " --seed 3 --out " + (dir / "b").string()), 0);
  EXPECT_EQ(nlohmann::json::parse(read_text((dir / "b" / "manifest.json").string())).at("seed"), 3);
}
#endif
