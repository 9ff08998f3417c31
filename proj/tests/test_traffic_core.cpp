#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tmut/core/baselines.hpp"
#include "tmut/core/craft.hpp"
#include "tmut/core/meta_info.hpp"
#include "tmut/core/pcap.hpp"
#include "tmut/core/safety.hpp"
#include "tmut/core/trace_csv.hpp"

using namespace tmut;
using tmut::testing::random_trace;

namespace {

std::vector<std::uint8_t> le_header(std::uint32_t magic) {
  std::vector<std::uint8_t> b;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put32(magic);
  b.push_back(2), b.push_back(0), b.push_back(4), b.push_back(0);
  put32(0), put32(0), put32(65535), put32(1);
  return b;
}

// Random meta-info vector that respects the layout and budget.
MetaInfoVector random_valid_miv(const TrafficTrace& t, const OverheadBudget& b, std::size_t k, Rng& rng) {
  MetaInfoVector m = vectorize(t, b, k);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double prev = t.packets.front().timestamp;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0) {
      const double gap = t.packets[i].timestamp - t.packets[i - 1].timestamp;
      prev += gap * (1.0 + (b.l_t - 1.0) * u(rng));
    }
    m.timestamp(i) = std::min(prev, t.packets.front().timestamp + b.l_t * t.elapsed());
  }
  std::size_t left = b.craft_pool(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double gap = i ? t.packets[i].timestamp - t.packets[i - 1].timestamp : 0.0;
    std::uniform_int_distribution<std::size_t> nc(0, std::min(k, left));
    const std::size_t c = t.packets[i].ip ? nc(rng) : 0;
    left -= c;
    m.n_crafted(i) = static_cast<double>(c);
    for (std::size_t j = 0; j < k; ++j) {
      m.interarrival(i, j) = u(rng) * b.l_t * gap;
      m.protocol_layers(i, j) = u(rng) < 0.5 ? 3 : 4;
      m.payload_size(i, j) = std::floor(u(rng) * 1461.0);
    }
  }
  return m;
}

}  // namespace

TEST(Pcap, EmptyCaptureParsesToEmptyTrace) {
  auto t = parse_pcap(le_header(0xa1b2c3d4));
  EXPECT_TRUE(t.empty());
}

TEST(Pcap, BadMagicRejected) { EXPECT_THROW(parse_pcap(le_header(0xdeadbeef)), MalformedPcap); }

TEST(Pcap, TruncatedRecordRejected) {
  Rng rng(3);
  auto bytes = serialize_pcap(random_trace(rng, 3));
  bytes.resize(bytes.size() - 5);
  EXPECT_THROW(parse_pcap(bytes), MalformedPcap);
}

TEST(Pcap, NonEthernetLinkRejected) {
  auto h = le_header(0xa1b2c3d4);
  h[20] = 101;
  EXPECT_THROW(parse_pcap(h), MalformedPcap);
}

TEST(Pcap, EmptyTraceSerializesToHeaderOnly) { EXPECT_EQ(serialize_pcap(TrafficTrace{}).size(), 24u); }

TEST(Pcap, SingleTcpRecordCaplenIsFrameLength) {
  TrafficTrace t;
  t.packets.push_back(make_tcp_packet(1.5, make_ip(1, 2, 3, 4), make_ip(5, 6, 7, 8), 1234, 80, tcp_flags::kSyn, 7, 0, 10));
  auto bytes = serialize_pcap(t);
  const std::size_t frame = 14 + 20 + 20 + 10;
  ASSERT_EQ(bytes.size(), 24 + 16 + frame);
  const std::uint32_t caplen = bytes[32] | (bytes[33] << 8) | (bytes[34] << 16) | (bytes[35] << 24);
  EXPECT_EQ(caplen, frame);
  EXPECT_EQ(t.packets[0].frame_len(), frame);
}

TEST(Pcap, GeneratedCaptureRoundTripsByteIdentical) {
  Rng rng(11);
  const auto bytes = serialize_pcap(random_trace(rng, 50));
  EXPECT_EQ(serialize_pcap(parse_pcap(bytes)), bytes);
}

TEST(Pcap, RandomTraceRoundTripsContent) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto t = random_trace(rng, 100);
    auto back = parse_pcap(serialize_pcap(t));
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      Packet a = t.packets[i];
      const Packet& b = back.packets[i];
      EXPECT_NEAR(a.timestamp, b.timestamp, 1e-6);
      // Parsed headers carry their checksums; compare everything else.
      if (a.ip) a.ip->checksum = b.ip->checksum;
      if (a.tcp) a.tcp->checksum = b.tcp->checksum;
      if (a.udp) a.udp->checksum = b.udp->checksum;
      if (a.icmp) a.icmp->checksum = b.icmp->checksum;
      EXPECT_TRUE(a.same_content(b)) << "seed " << seed << " packet " << i;
    }
  }
}

TEST(Pcap, BigEndianAndNanosecondVariantsRoundTrip) {
  Rng rng(5);
  auto t = random_trace(rng, 30);
  for (bool big : {false, true})
    for (bool ns : {false, true}) {
      t.format.big_endian = big;
      t.format.nanosecond = ns;
      auto bytes = serialize_pcap(t);
      auto back = parse_pcap(bytes);
      EXPECT_EQ(back.format, t.format);
      EXPECT_EQ(serialize_pcap(back), bytes);
    }
}

TEST(Pcap, EthernetPaddingIsKept) {
  TrafficTrace t;
  auto p = make_tcp_packet(2.0, make_ip(1, 1, 1, 1), make_ip(2, 2, 2, 2), 1, 2, tcp_flags::kSyn, 0, 0, 0);
  p.trailer.assign(6, 0);
  t.packets.push_back(p);
  auto bytes = serialize_pcap(t);
  auto back = parse_pcap(bytes);
  ASSERT_EQ(back.packets[0].protocol, Protocol::kTcp);
  EXPECT_EQ(back.packets[0].trailer.size(), 6u);
  EXPECT_EQ(serialize_pcap(back), bytes);
}

TEST(MetaInfo, LayoutArithmetic) {
  Rng rng(1);
  auto t4 = random_trace(rng, 4);
  OverheadBudget b{0.5, 2.0};
  auto m = vectorize(t4, b, 1);
  EXPECT_EQ(m.dim(), 20u);
  EXPECT_EQ(b.craft_pool(4), 2u);
  // Brute-force field count: 2 fields per packet plus 3 per sub-slot.
  std::size_t fields = 0;
  for (std::size_t i = 0; i < 4; ++i) fields += 2 + 3 * m.capacity();
  EXPECT_EQ(fields, m.dim());

  EXPECT_EQ(vectorize(random_trace(rng, 10), b, 2).dim(), 80u);
  OverheadBudget paper{2.0, 1.0};
  EXPECT_EQ(paper.default_capacity(), 2u);
  EXPECT_EQ(MetaInfoVector::dimension(100, paper.default_capacity()), 800u);
}

TEST(MetaInfo, LayoutPropertyOverRange) {
  for (std::size_t n = 1; n <= 1000; n += 37)
    for (std::size_t k = 0; k <= 4; ++k) EXPECT_EQ(MetaInfoVector(n, k).dim(), n * (3 * k + 2));
}

TEST(MetaInfo, DefaultCapacity) {
  EXPECT_EQ((OverheadBudget{0.0, 1}.default_capacity()), 1u);
  EXPECT_EQ((OverheadBudget{0.5, 1}.default_capacity()), 1u);
  EXPECT_EQ((OverheadBudget{1.0, 1}.default_capacity()), 1u);
  EXPECT_EQ((OverheadBudget{1.2, 1}.default_capacity()), 2u);
}

TEST(MetaInfo, VectorizeEmptyTraceThrows) {
  EXPECT_THROW(vectorize(TrafficTrace{}, OverheadBudget{}, 1), EmptyTrace);
}

TEST(MetaInfo, VectorizeCopiesTimestampsAndZeroesCraft) {
  Rng rng(2);
  auto t = random_trace(rng, 12);
  auto m = vectorize(t, {1.0, 3.0}, 2);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(m.timestamp(i), t.packets[i].timestamp);
    EXPECT_EQ(m.n_crafted(i), 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(m.interarrival(i, j), 0.0);
      EXPECT_EQ(m.protocol_layers(i, j), 0.0);
      EXPECT_EQ(m.payload_size(i, j), 0.0);
    }
  }
}

TEST(MetaInfo, RebuildIdentityOnRandomTraces) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto t = random_trace(rng, 5 + seed * 3);
    OverheadBudget b{0.5, 5.0};
    auto back = rebuild(vectorize(t, b, b.default_capacity()), t, b, rng);
    EXPECT_EQ(back.packets, t.packets) << "seed " << seed;
  }
}

TEST(MetaInfo, OneCraftOnTcpAnchor) {
  Rng rng(9);
  TrafficTrace t;
  for (int i = 0; i < 4; ++i)
    t.packets.push_back(make_tcp_packet(10.0 + i, make_ip(10, 0, 0, 1), make_ip(10, 0, 0, 2), 4000, 80,
                                        tcp_flags::kAck, 5000 + 100 * i, 900, 100));
  OverheadBudget b{0.5, 2.0};
  for (int trial = 0; trial < 50; ++trial) {
    auto m = vectorize(t, b, 1);
    m.n_crafted(2) = 1;
    m.interarrival(2, 0) = 0.25;
    m.protocol_layers(2, 0) = 4;
    m.payload_size(2, 0) = 40;
    auto out = rebuild(m, t, b, rng);
    ASSERT_EQ(out.size(), 5u);
    const Packet& c = out.packets[2];
    ASSERT_EQ(c.provenance, Provenance::kCrafted);
    EXPECT_DOUBLE_EQ(c.timestamp, 11.75);
    ASSERT_TRUE(c.tcp);
    EXPECT_EQ(c.tcp->src_port, 4000);
    EXPECT_EQ(c.tcp->dst_port, 80);
    const Packet& anchor = t.packets[2];
    const bool syn = c.tcp->flags & tcp_flags::kSyn;
    const std::int64_t ds = seq_diff(c.tcp->seq, anchor.tcp->seq);
    const std::int64_t da = seq_diff(c.tcp->ack, anchor.tcp->ack);
    const bool out_of_window = ds < 0 || ds >= kSeqGuard || da > kSeqGuard || da < -std::int64_t{kSeqGuard};
    EXPECT_TRUE(syn || out_of_window);
    EXPECT_TRUE(satisfies_recipe(c, anchor));
  }
}

TEST(MetaInfo, ElapsedBoundary) {
  Rng rng(4);
  TrafficTrace t;
  for (int i = 0; i < 5; ++i) t.packets.push_back(make_udp_packet(100.0 + 0.5 * i, 1, 2, 3, 4, 10));
  OverheadBudget b{0.0, 3.0};
  auto m = vectorize(t, b, 1);
  for (std::size_t i = 0; i < 5; ++i) m.timestamp(i) = 100.0 + 1.5 * static_cast<double>(i);
  auto out = rebuild(m, t, b, rng);
  EXPECT_DOUBLE_EQ(out.elapsed(), 6.0);
  m.timestamp(4) += 1e-6;
  EXPECT_THROW(rebuild(m, t, b, rng), BudgetViolation);
}

TEST(MetaInfo, CraftPoolEnforced) {
  Rng rng(4);
  auto t = random_trace(rng, 10, false);
  OverheadBudget b{0.2, 1.0};
  auto m = vectorize(t, b, 1);
  for (std::size_t i = 0; i < 3; ++i) m.n_crafted(i) = 1;
  EXPECT_THROW(rebuild(m, t, b, rng), BudgetViolation);
}

TEST(MetaInfo, LayoutMismatchDetected) {
  Rng rng(4);
  auto t = random_trace(rng, 10);
  OverheadBudget b{0.5, 2.0};
  auto m = vectorize(random_trace(rng, 9), b, 1);
  EXPECT_THROW(rebuild(m, t, b, rng), LayoutMismatch);
  auto m2 = vectorize(t, b, 1);
  m2.n_crafted(0) = 0.5;
  EXPECT_THROW(rebuild(m2, t, b, rng), LayoutMismatch);
}

TEST(MetaInfo, RandomRebuildsAreSafeAndMonotonic) {
  std::size_t violations = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    auto t = random_trace(rng, 2 + seed % 40);
    OverheadBudget b{(seed % 7) * 0.25, 1.0 + (seed % 5)};
    const std::size_t k = b.default_capacity();
    auto m = random_valid_miv(t, b, k, rng);
    auto out = rebuild(m, t, b, rng);
    auto rep = check_safety(t, out, b);
    if (!rep.ok()) {
      ++violations;
      ADD_FAILURE() << "seed " << seed << ": " << rep.violations.front();
    }
    EXPECT_TRUE(out.timestamps_sorted());
    // Order preservation through provenance tags.
    std::size_t j = 0;
    for (const auto& p : out.packets)
      if (p.provenance == Provenance::kOriginal) EXPECT_TRUE(p.same_content(t.packets[j++]));
    EXPECT_EQ(j, t.size());
  }
  EXPECT_EQ(violations, 0u);
}

TEST(MetaInfo, RebuildSurvivesPcapRoundTripSafetyAudit) {
  Rng rng(77);
  auto t = parse_pcap(serialize_pcap(random_trace(rng, 40, false)));
  OverheadBudget b{1.0, 3.0};
  auto out = rebuild(random_valid_miv(t, b, 1, rng), t, b, rng);
  auto reread = parse_pcap(serialize_pcap(out));
  for (auto& p : t.packets) p.timestamp = std::round(p.timestamp * 1e6) / 1e6;
  auto rep = check_safety(t, reread, b);
  EXPECT_TRUE(rep.originals_preserved);
  EXPECT_TRUE(rep.recipes_ok) << (rep.violations.empty() ? "" : rep.violations.front());
}

TEST(Craft, ResynOnEstablishedFlow) {
  Rng rng(1);
  auto a = make_tcp_packet(5, 1, 2, 1111, 22, tcp_flags::kAck, 1000, 2000, 50);
  auto c = craft_packet({CraftKind::kTcpResyn}, a, 0, rng);
  EXPECT_EQ(c.tcp->flags & tcp_flags::kSyn, tcp_flags::kSyn);
  EXPECT_EQ(c.src_ip(), a.src_ip());
  EXPECT_EQ(c.dst_ip(), a.dst_ip());
  EXPECT_EQ(c.src_port(), a.src_port());
  EXPECT_EQ(c.dst_port(), a.dst_port());
}

TEST(Craft, UdpPadLength) {
  Rng rng(1);
  auto a = make_udp_packet(5, 1, 2, 53, 53, 10);
  auto c = craft_packet({CraftKind::kUdpPad}, a, 100, rng);
  EXPECT_EQ(c.protocol, Protocol::kUdp);
  EXPECT_EQ(c.payload_len(), 100u);
}

TEST(Craft, BadSeqOutsideWindow) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(s);
    auto a = make_tcp_packet(5, 1, 2, 1111, 22, tcp_flags::kAck, 1000, 2000, 50);
    auto c = craft_packet({CraftKind::kTcpBadSeq}, a, 30, rng);
    // Window oracle: the receiver expects bytes starting at 1000.
    const std::int64_t start = 1000, guard_end = start + kSeqGuard;
    const std::int64_t seq = c.tcp->seq;
    const bool below = seq + 30 <= start;
    const bool above = seq >= guard_end;
    EXPECT_TRUE(below || above) << seq;
  }
}

TEST(Craft, InapplicableRecipeThrows) {
  Rng rng(1);
  auto u = make_udp_packet(5, 1, 2, 53, 53, 10);
  EXPECT_THROW(craft_packet({CraftKind::kTcpResyn}, u, 0, rng), InapplicableRecipe);
  auto t = make_tcp_packet(5, 1, 2, 1, 2, tcp_flags::kAck, 0, 0, 0);
  EXPECT_THROW(craft_packet({CraftKind::kUdpPad}, t, 0, rng), InapplicableRecipe);
  Packet other;
  EXPECT_THROW(craft_packet({CraftKind::kIcmpPad}, other, 0, rng), InapplicableRecipe);
}

TEST(Craft, DeprecatedIcmpTypes) {
  Rng rng(2);
  auto a = make_udp_packet(5, 1, 2, 53, 53, 10);
  for (int i = 0; i < 50; ++i) {
    auto c = craft_packet({CraftKind::kIcmpDeprecated}, a, 8, rng);
    EXPECT_TRUE(is_deprecated_icmp_type(c.icmp->type));
    EXPECT_TRUE(satisfies_recipe(c, a));
  }
}

TEST(Craft, NoCraftOpensFreshConnectionOrSendsInWindowData) {
  for (std::uint64_t s = 0; s < 300; ++s) {
    Rng rng(s);
    auto a = make_tcp_packet(5, 1, 2, 1111, 22, tcp_flags::kAck | tcp_flags::kPsh, 77777, 555, 100);
    for (auto k : {CraftKind::kTcpResyn, CraftKind::kTcpBadSeq, CraftKind::kTcpBadAck}) {
      auto c = craft_packet({k}, a, 200, rng);
      EXPECT_TRUE(satisfies_recipe(c, a));
      if (k == CraftKind::kTcpResyn) {
        EXPECT_TRUE(c.payload.empty());
      } else {
        EXPECT_FALSE(c.tcp->flags & tcp_flags::kSyn);
        EXPECT_FALSE(craft_detail::overlaps_window(c.tcp->seq, c.payload.size(), a.tcp->seq));
      }
    }
  }
}

TEST(Safety, IdenticalTracePasses) {
  Rng rng(1);
  auto t = random_trace(rng, 30);
  auto r = check_safety(t, t, {0.0, 1.0});
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.crafted_count, 0u);
}

TEST(Safety, DeletedPacketFailsClauseA) {
  Rng rng(1);
  auto t = random_trace(rng, 30);
  auto m = t;
  m.packets.erase(m.packets.begin() + 7);
  EXPECT_FALSE(check_safety(t, m, {1.0, 1.0}).originals_preserved);
}

TEST(Safety, CraftCountBoundary) {
  Rng rng(1);
  TrafficTrace t;
  for (int i = 0; i < 10; ++i) t.packets.push_back(make_udp_packet(i, 1, 2, 3, 4, 10));
  OverheadBudget b{0.3, 1.0};
  auto m = vectorize(t, b, 1);
  for (std::size_t i = 1; i <= 3; ++i) {
    m.n_crafted(i) = 1;
    m.interarrival(i, 0) = 0.1;
    m.protocol_layers(i, 0) = 4;
  }
  auto ok = rebuild(m, t, b, rng);
  EXPECT_TRUE(check_safety(t, ok, b).ok());
  auto over = ok;
  auto extra = craft_packet({CraftKind::kUdpPad}, t.packets[8], 5, rng);
  extra.timestamp = 7.5;
  over.packets.insert(over.packets.begin() + 11, extra);
  auto r = check_safety(t, over, b);
  EXPECT_EQ(r.crafted_count, 4u);
  EXPECT_FALSE(r.craft_count_ok);
  EXPECT_TRUE(r.recipes_ok);
}

TEST(Safety, StretchedElapsedFailsClauseC) {
  Rng rng(1);
  auto t = random_trace(rng, 10);
  auto m = t;
  m.packets.back().timestamp += 10.0 * t.elapsed();
  EXPECT_FALSE(check_safety(t, m, {0.0, 2.0}).elapsed_ok);
}

TEST(Safety, TamperedCraftFailsClauseD) {
  Rng rng(1);
  TrafficTrace t;
  for (int i = 0; i < 4; ++i)
    t.packets.push_back(make_tcp_packet(i, 1, 2, 5, 6, tcp_flags::kAck, 1000 * i, 0, 10));
  auto c = craft_packet({CraftKind::kTcpBadSeq}, t.packets[2], 0, rng);
  c.tcp->seq = t.packets[2].tcp->seq;  // now in-window
  c.timestamp = 1.5;
  auto m = t;
  m.packets.insert(m.packets.begin() + 2, c);
  EXPECT_FALSE(check_safety(t, m, {1.0, 1.0}).recipes_ok);
}

TEST(Baselines, RandomStUnitStretchIsIdentity) {
  Rng rng(3);
  auto t = random_trace(rng, 40);
  auto out = random_st(t, {0.0, 1.0}, rng);
  EXPECT_EQ(out.packets, t.packets);
}

TEST(Baselines, RandomStDeterministic) {
  Rng a(8), b(8), g(1);
  auto t = random_trace(g, 40);
  EXPECT_EQ(random_st(t, {0, 4}, a).packets, random_st(t, {0, 4}, b).packets);
}

TEST(Baselines, RandomStBudgetAudit) {
  Rng g(12);
  auto t = random_trace(g, 60);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    auto out = random_st(t, {0.0, 5.0}, rng);
    worst = std::max(worst, out.elapsed() / t.elapsed());
    ASSERT_TRUE(check_safety(t, out, {0.0, 5.0}).ok());
  }
  EXPECT_LE(worst, 5.0);
  EXPECT_GT(worst, 1.0);
}

TEST(Baselines, RandomDupZeroBudgetUnchanged) {
  Rng rng(3);
  auto t = random_trace(rng, 20);
  EXPECT_EQ(random_dup(t, {0.0, 1.0}, rng).packets, t.packets);
}

TEST(Baselines, RandomDupCountAndSafety) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(s);
    auto t = random_trace(rng, 10);
    auto out = random_dup(t, {0.5, 1.0}, rng);
    EXPECT_LE(out.count(Provenance::kCrafted), 5u);
    auto r = check_safety(t, out, {0.5, 1.0});
    EXPECT_TRUE(r.originals_preserved);
    EXPECT_TRUE(r.ok());
  }
}

TEST(TraceCsv, OneLinePerPacket) {
  Rng rng(3);
  auto t = random_trace(rng, 7);
  auto csv = trace_to_csv(t);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
}
