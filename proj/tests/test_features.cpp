#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "feature_oracle.hpp"
#include "support.hpp"
#include "tmut/features/feature_io.hpp"
#include "tmut/features/flow_extractor.hpp"
#include "tmut/features/normalize.hpp"
#include "tmut/features/packet_extractor.hpp"

using namespace tmut;
using tmut::testing::brute_force_universe;
using tmut::testing::random_trace;

namespace {

// Flip roughly half the packets so channels and sockets see both directions.
TrafficTrace two_way(std::mt19937_64& rng, std::size_t n) {
  auto t = random_trace(rng, n);
  std::bernoulli_distribution flip(0.5);
  for (auto& p : t.packets) {
    if (!p.ip || !flip(rng)) continue;
    std::swap(p.ip->src, p.ip->dst);
    std::swap(p.src_mac, p.dst_mac);
    if (p.tcp) std::swap(p.tcp->src_port, p.tcp->dst_port);
    if (p.udp) std::swap(p.udp->src_port, p.udp->dst_port);
  }
  return t;
}


}  // namespace

TEST(DampedStat, RepeatedValueHasZeroStd) {
  DampedStat s(1.0);
  s.update(0.0, 2.0);
  s.update(0.0, 2.0);
  EXPECT_DOUBLE_EQ(s.mean(), 2.0);
  EXPECT_DOUBLE_EQ(s.stddev(), 0.0);
}

TEST(DampedStat, TwoValuesSameTime) {
  DampedStat s(1.0);
  s.update(0.0, 1.0);
  s.update(0.0, 3.0);
  // Brute force: weights 1,1 -> mean 2, var ((1-2)^2 + (3-2)^2)/2 = 1.
  EXPECT_DOUBLE_EQ(s.w, 2.0);
  EXPECT_DOUBLE_EQ(s.mean(), 2.0);
  EXPECT_DOUBLE_EQ(s.variance(), 1.0);
}

TEST(DampedStat, DecayClosedForm) {
  DampedStat s(1.0);
  s.update(0.0, 5.0);
  s.decay_to(1.0);
  EXPECT_DOUBLE_EQ(s.w, std::pow(2.0, -1.0));
  for (double lam : {0.01, 0.1, 1.0, 3.0, 5.0})
    for (double dt : {0.0, 0.1, 0.7, 2.5}) {
      DampedStat d(lam);
      d.update(10.0, 1.0);
      EXPECT_NEAR(d.weight_at(10.0 + dt), std::pow(2.0, -lam * dt), 1e-15);
    }
}

TEST(DampedStat, TimeRegressionRejected) {
  DampedStat s(1.0);
  s.update(5.0, 1.0);
  EXPECT_THROW(s.update(4.0, 1.0), TimeRegression);
  EXPECT_NO_THROW(s.update(5.0 - 1e-12, 1.0));
}

TEST(DampedStat, WeightMonotoneWithoutInsertions) {
  DampedStat s(0.3);
  s.update(0.0, 4.0);
  s.update(0.5, 7.0);
  double prev = s.w;
  for (double t = 0.5; t < 30.0; t += 0.37) {
    const double w = s.weight_at(t);
    EXPECT_LE(w, prev);
    prev = w;
  }
}

TEST(DampedStat, VarianceInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(0, 1500), dt(0, 0.5);
  for (double lam : {5.0, 0.01}) {
    DampedStat s(lam);
    double t = 0;
    for (int i = 0; i < 2000; ++i) {
      t += dt(rng);
      s.update(t, v(rng));
      ASSERT_GE(s.w, 0.0);
      ASSERT_GE(s.raw_variance(), -1e-9 * std::max(1.0, s.mean() * s.mean()));
    }
  }
}

TEST(PacketExtractor, DimensionsAndNames) {
  auto cfg = target_extractor_config();
  EXPECT_EQ(cfg.dims(), 95u);
  EXPECT_EQ(cfg.universe_dims(), 116u);
  EXPECT_EQ(feature_names(cfg).size(), 95u);
  EXPECT_EQ(feature_names(common_pool_config()).size(), 21u);
  EXPECT_EQ(feature_names(cfg).front(), "L5_srcmacip_w");
}

TEST(PacketExtractor, FirstPacketWeightsOneStdsZero) {
  auto cfg = target_extractor_config();
  PacketExtractor ex(cfg);
  auto f = ex.process(make_tcp_packet(3.0, 1, 2, 3, 4, tcp_flags::kSyn, 0, 0, 10));
  for (std::size_t l = 0; l < 5; ++l) {
    const double* o = f.data() + l * kTargetFeaturesPerLambda;
    for (std::size_t w : {0, 3, 6, 11, 14}) EXPECT_EQ(o[w], 1.0);
    for (std::size_t s : {2, 5, 8, 13, 16}) EXPECT_EQ(o[s], 0.0);
  }
}

TEST(PacketExtractor, EqualPacketsSameTime) {
  PacketExtractor ex(target_extractor_config());
  auto p = make_udp_packet(1.0, 1, 2, 3, 4, 20);
  ex.process(p);
  auto f = ex.process(p);
  EXPECT_EQ(f[14], 2.0);
  EXPECT_EQ(f[16], 0.0);
}

TEST(PacketExtractor, MatchesBruteForceOnRandomTraces) {
  ExtractorConfig cfg;
  cfg.known_mask.assign(cfg.universe_dims(), true);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    auto t = two_way(rng, 20 + seed % 81);
    PacketExtractor ex(cfg);
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto inc = ex.process_universe(t.packets[i]);
      auto ref = brute_force_universe(cfg, t, i);
      for (std::size_t j = 0; j < inc.size(); ++j) worst = std::max(worst, std::abs(inc[j] - ref[j]));
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(PacketExtractor, DeterministicAndForkable) {
  std::mt19937_64 rng(4);
  auto t = two_way(rng, 60);
  auto cfg = target_extractor_config();
  EXPECT_EQ(packet_extract_trace(cfg, t), packet_extract_trace(cfg, t));
  PacketExtractor ex(cfg);
  for (std::size_t i = 0; i < 30; ++i) ex.process(t.packets[i]);
  PacketExtractor fork = ex;
  Matrix a, b;
  for (std::size_t i = 30; i < 60; ++i) a.push_back(ex.process(t.packets[i]));
  for (std::size_t i = 30; i < 60; ++i) b.push_back(fork.process(t.packets[i]));
  EXPECT_EQ(a, b);
}

TEST(PacketExtractor, TimeRegressionRejected) {
  PacketExtractor ex(target_extractor_config());
  ex.process(make_udp_packet(2.0, 1, 2, 3, 4, 20));
  EXPECT_THROW(ex.process(make_udp_packet(1.0, 1, 2, 3, 4, 20)), TimeRegression);
}

TEST(Surrogate, FullKnowledgeIsTarget) {
  std::mt19937_64 rng(1);
  auto target = target_extractor_config();
  EXPECT_EQ(build_surrogate(target, 1.0, common_pool_config(), rng), target);
}

TEST(Surrogate, ZeroKnowledgeIsPool) {
  std::mt19937_64 rng(1);
  auto s = build_surrogate(target_extractor_config(), 0.0, common_pool_config(), rng);
  EXPECT_EQ(s.known_mask, common_pool_config().known_mask);
}

TEST(Surrogate, PartialKnowledgeCardinalityAndDeterminism) {
  auto target = target_extractor_config();
  for (double frac : {0.5, 0.75}) {
    std::mt19937_64 a(9), b(9);
    auto s1 = build_surrogate(target, frac, common_pool_config(), a);
    auto s2 = build_surrogate(target, frac, common_pool_config(), b);
    EXPECT_EQ(s1.known_mask, s2.known_mask);
    std::size_t true_dims = 0;
    for (std::size_t i = 0; i < target.target_dims(); ++i) true_dims += s1.known_mask[i];
    EXPECT_EQ(true_dims, static_cast<std::size_t>(std::floor(frac * 95)));
    EXPECT_EQ(s1.dims(), true_dims + 21);
  }
}

TEST(FlowExtractor, SinglePacketFlow) {
  TrafficTrace t;
  t.packets.push_back(make_udp_packet(5, 1, 2, 3, 4, 10));
  auto flows = flow_extract(t);
  ASSERT_EQ(flows.size(), 1u);
  const Vec& f = flows[0].second;
  ASSERT_EQ(f.size(), kFlowFeatureDims);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1] + f[2], 1.0);
  for (std::size_t j = 13; j <= 20; ++j) EXPECT_EQ(f[j], 0.0);
}

TEST(FlowExtractor, SourcePortSplitsFlows) {
  TrafficTrace t;
  t.packets.push_back(make_tcp_packet(1, 1, 2, 1000, 80, tcp_flags::kAck, 0, 0, 0));
  t.packets.push_back(make_tcp_packet(2, 1, 2, 1001, 80, tcp_flags::kAck, 0, 0, 0));
  EXPECT_EQ(flow_extract(t).size(), 2u);
}

TEST(FlowExtractor, GeneratedDirectionCounts) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cnt(1, 20);
  for (int trial = 0; trial < 20; ++trial) {
    const int nf = cnt(rng), nb = cnt(rng);
    std::vector<bool> dirs;
    for (int i = 0; i < nf; ++i) dirs.push_back(true);
    for (int i = 0; i < nb; ++i) dirs.push_back(false);
    std::shuffle(dirs.begin() + 1, dirs.end(), rng);
    if (!dirs[0]) std::swap(dirs[0], *std::find(dirs.begin(), dirs.end(), true));
    TrafficTrace t;
    double ts = 0;
    for (bool fwd : dirs) {
      ts += 0.5;
      t.packets.push_back(fwd ? make_tcp_packet(ts, 1, 2, 5000, 443, tcp_flags::kAck, 0, 0, 100)
                              : make_tcp_packet(ts, 2, 1, 443, 5000, tcp_flags::kAck, 0, 0, 300));
    }
    auto flows = flow_extract(t);
    ASSERT_EQ(flows.size(), 1u);
    EXPECT_EQ(flows[0].first.fwd_pkts, static_cast<std::size_t>(nf));
    EXPECT_EQ(flows[0].first.bwd_pkts, static_cast<std::size_t>(nb));
    EXPECT_EQ(flows[0].second[3], nf * 154.0);
    EXPECT_EQ(flows[0].second[4], nb * 354.0);
  }
}

TEST(FlowExtractor, IdleTimeoutSplits) {
  TrafficTrace t;
  t.packets.push_back(make_udp_packet(0, 1, 2, 3, 4, 10));
  t.packets.push_back(make_udp_packet(100, 1, 2, 3, 4, 10));
  t.packets.push_back(make_udp_packet(221, 1, 2, 3, 4, 10));
  EXPECT_EQ(flow_extract(t).size(), 2u);
}

TEST(FlowExtractor, PacketCountsAddUp) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    std::mt19937_64 rng(s);
    auto t = two_way(rng, 150);
    std::size_t total = 0;
    for (const auto& [rec, f] : flow_extract(t)) total += rec.fwd_pkts + rec.bwd_pkts;
    EXPECT_EQ(total, t.size());
  }
}

TEST(Normalize, MinMaxAndClip) {
  Matrix rows{{0, 10, 5}, {2, 20, 5}, {1, 15, 5}};
  auto n = fit_normalization(rows);
  auto v = normalize_values({0, 20, 5}, n);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 1.0);
  EXPECT_EQ(v[2], 0.0);
  auto c = normalize_values({5, -3, 9}, n);
  EXPECT_EQ(c[0], 1.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_THROW(fit_normalization({{1.0}}), std::invalid_argument);
}

TEST(Normalize, Idempotent) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 3);
  Matrix rows(20, Vec(6));
  for (auto& r : rows)
    for (auto& x : r) x = g(rng);
  ExtractorConfig cfg;
  cfg.normalization = fit_normalization(rows);
  for (int i = 0; i < 50; ++i) {
    FeatureVector fv{Vec(6)};
    for (auto& x : fv.values) x = 2 * g(rng);
    auto once = normalize(fv, cfg);
    EXPECT_EQ(normalize(once, cfg), once);
    for (double x : once.values) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(FeatureIo, CsvRoundTripIsExact) {
  std::mt19937_64 rng(7);
  auto t = two_way(rng, 40);
  auto cfg = target_extractor_config();
  FeatureTable tab{feature_names(cfg), packet_extract_trace(cfg, t)};
  auto text = features_to_csv(tab);
  auto back = features_from_csv(text);
  EXPECT_EQ(back.names, tab.names);
  EXPECT_EQ(back.rows, tab.rows);
  EXPECT_EQ(features_to_csv(back), text);
}

TEST(FeatureIo, NormalizationJson) {
  Normalization n{{0, 1.5}, {2, 3.25}};
  EXPECT_EQ(normalization_from_json(nlohmann::json::parse(to_json(n).dump())), n);
}
