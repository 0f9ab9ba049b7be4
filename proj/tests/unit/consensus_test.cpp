#include <gtest/gtest.h>

#include "bbox/consensus.hpp"
#include "bbox/scenario.hpp"
#include "support/fixtures.hpp"
#include "support/scenario_support.hpp"

using namespace bbox;
using namespace bbox::consensus;
using bbox::testing::key;
using bbox::testing::keys;
using bbox::testing::pubs;

namespace {

struct OrdererTest : ::testing::Test {
  crypto::SigningKey msp = key("msp");
  std::vector<crypto::SigningKey> orderers = keys("orderer", 4);
  std::vector<crypto::SigningKey> aggrs = keys("aggr", 3);

  ledger::Ledger genesis() const {
    ledger::SystemConfig c;
    c.orderers = pubs(orderers);
    c.aggregators = pubs(aggrs);
    c.policy.tau = 2;
    return ledger::Ledger(ledger::make_genesis(msp.public_key(), c));
  }

  OrdererActor make(std::size_t i) const { return OrdererActor("orderer:" + std::to_string(i), orderers[i], genesis(), {}); }
};

scenario::ScenarioConfig faulted(std::uint64_t seed, std::vector<scenario::ByzantineSpec> byz) {
  scenario::ScenarioConfig c;
  c.name = "consensus";
  c.seed = seed;
  c.rounds = 6;
  c.groups = {{"g0", 2, 2}};
  c.byzantine = std::move(byz);
  return c;
}

void expect_pairwise_prefix(scenario::Scenario& s) {
  std::vector<const ledger::Ledger*> honest;
  for (std::size_t i = 0; i < s.config().orderers; ++i) {
    if (const auto* l = s.orderer(i).replica()) honest.push_back(l);
  }
  for (std::size_t a = 0; a < honest.size(); ++a) {
    for (std::size_t b = a + 1; b < honest.size(); ++b) EXPECT_TRUE(bbox::testing::prefix_related(*honest[a], *honest[b]));
  }
}

}  // namespace

TEST_F(OrdererTest, LeaderRotatesThroughOl) {
  auto o = make(0);
  for (std::uint64_t v = 0; v < 8; ++v) EXPECT_EQ(o.leader(v), orderers[v % 4].public_key());
  EXPECT_TRUE(o.is_leader());
  EXPECT_FALSE(make(1).is_leader());
}

TEST_F(OrdererTest, OnlyLeaderProposes) {
  auto tx = bbox::testing::make_tx(aggrs[0], {aggrs[0], aggrs[1]}, 1);
  EXPECT_EQ(make(1).propose_block({tx}).code(), ErrorCode::NotLeader);
  auto leader = make(0);
  EXPECT_EQ(leader.propose_block({}).code(), ErrorCode::InvalidParameter);
  auto m = leader.propose_block({tx});
  ASSERT_TRUE(m);
  EXPECT_EQ(m.value().kind, net::ConsensusKind::PrePrepare);
  EXPECT_EQ(m.value().height, 1u);
  EXPECT_TRUE(m.value().verify_signature());
  EXPECT_EQ(m.value().hash, m.value().block->hash());
}

TEST_F(OrdererTest, AdmissionChecksPolicyOncePerNonce) {
  auto o = make(0);
  EXPECT_EQ(o.admit(bbox::testing::make_tx(aggrs[0], {aggrs[0]}, 1)), ledger::BlockFault::InsufficientEndorsements);
  EXPECT_EQ(o.admit(bbox::testing::make_tx(key("outsider"), {aggrs[0], aggrs[1]}, 2)),
            ledger::BlockFault::UnauthorizedSubmitter);
  auto good = bbox::testing::make_tx(aggrs[0], {aggrs[0], aggrs[1]}, 3);
  EXPECT_EQ(o.admit(good), ledger::BlockFault::None);
  EXPECT_EQ(o.admit(good), ledger::BlockFault::None);
  EXPECT_EQ(o.pool_size(), 1u);
  EXPECT_TRUE(o.seen_nonce(good.nonce));
}

TEST(ConsensusWire, RoundTripsEveryKind) {
  auto k = key("orderer0");
  auto tx = bbox::testing::make_tx(key("aggr0"), {key("aggr0")}, 1);
  for (auto kind : {ConsensusKind::PrePrepare, ConsensusKind::Prepare, ConsensusKind::Commit, ConsensusKind::ViewChange,
                    ConsensusKind::BlockDeliver}) {
    ConsensusMsg m;
    m.kind = kind;
    m.view = 3;
    m.height = 7;
    m.hash = sha256(as_bytes("block"));
    if (kind != ConsensusKind::Prepare && kind != ConsensusKind::Commit) {
      ledger::Block b;
      b.height = 7;
      b.transactions = {tx};
      m.block = b;
      net::PrepareCert cert{2, 7, m.hash, {{k.public_key(), k.sign(as_bytes("vote"))}}};
      m.justify = cert;
    }
    m.sign(k);
    auto decoded = ConsensusMsg::decode(m.encode());
    EXPECT_EQ(decoded.encode(), m.encode());
    EXPECT_TRUE(decoded.verify_signature());
    EXPECT_EQ(decoded.kind, kind);
  }
}

TEST(ConsensusWire, RejectsUnknownVersionAndTruncation) {
  ConsensusMsg m;
  m.hash = sha256(as_bytes("x"));
  m.sign(key("orderer0"));
  auto bytes = m.encode();
  auto bad = bytes;
  bad[0] = 0x02;
  EXPECT_THROW(ConsensusMsg::decode(bad), Error);
  bad = bytes;
  bad[1] = 9;
  EXPECT_THROW(ConsensusMsg::decode(bad), Error);
  for (std::size_t cut : {std::size_t{1}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(ConsensusMsg::decode(ByteView(bytes.data(), cut)), Error);
  }
  auto tampered = ConsensusMsg::decode(bytes);
  tampered.view += 1;
  EXPECT_FALSE(tampered.verify_signature());
}

TEST(ConsensusMode, ParsesNames) {
  EXPECT_EQ(parse_byzantine_mode("silent"), ByzantineMode::Silent);
  EXPECT_EQ(parse_byzantine_mode("equivocate"), ByzantineMode::Equivocate);
  EXPECT_EQ(parse_byzantine_mode("invalid"), ByzantineMode::InvalidProposal);
  EXPECT_THROW(parse_byzantine_mode("sneaky"), Error);
}

TEST(ConsensusScenario, AllHonestCommitsEverything) {
  scenario::Scenario s(faulted(11, {}));
  auto r = s.run();
  EXPECT_EQ(r.consistency_violations, 0u);
  EXPECT_EQ(r.honest_committed, r.honest_sent);
  EXPECT_EQ(r.readings_sent, 12u);
  EXPECT_LE(r.max_commit_rounds, 1u);
  expect_pairwise_prefix(s);
}

// One Byzantine orderer of four, across modes and positions (the leader of view 0 included).
TEST(ConsensusScenario, SafetyAndLivenessUnderOneFault) {
  const ByzantineMode modes[] = {ByzantineMode::Silent, ByzantineMode::Equivocate, ByzantineMode::InvalidProposal};
  std::mt19937_64 rng(77);
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto mode = modes[seed % 3];
    std::size_t idx = seed < 4 ? 0 : rng() % 4;
    scenario::Scenario s(faulted(seed, {{idx, mode}}));
    auto r = s.run();
    SCOPED_TRACE("seed " + std::to_string(seed) + " mode " + std::string(to_string(mode)) + " at " + std::to_string(idx));
    EXPECT_EQ(r.consistency_violations, 0u);
    EXPECT_EQ(r.honest_committed, r.honest_sent);
    EXPECT_EQ(r.uncommitted_endorsed, 0u);
    EXPECT_LE(r.max_commit_rounds, 10u);
    expect_pairwise_prefix(s);
  }
}

TEST(ConsensusScenario, BeyondThresholdStaysSafe) {
  scenario::Scenario s(faulted(5, {{0, ByzantineMode::Equivocate}, {1, ByzantineMode::Equivocate}}));
  auto r = s.run();
  EXPECT_EQ(r.consistency_violations, 0u);
  expect_pairwise_prefix(s);
}

TEST(ConsensusScenario, OrdererLossStillConverges) {
  auto c = faulted(3, {{2, ByzantineMode::Silent}});
  c.faults.loss.push_back({{"orderer:*", "*"}, 0.03});
  scenario::Scenario s(c);
  auto r = s.run();
  EXPECT_EQ(r.consistency_violations, 0u);
  EXPECT_EQ(r.honest_committed, r.honest_sent);
  expect_pairwise_prefix(s);
}
