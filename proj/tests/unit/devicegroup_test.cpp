#include <gtest/gtest.h>

#include <memory>

#include "bbox/devicegroup.hpp"
#include "bbox/membership.hpp"
#include "support/fake_context.hpp"
#include "support/fixtures.hpp"

using namespace bbox;
using namespace bbox::devicegroup;
using bbox::testing::FakeContext;
using bbox::testing::key;
using bbox::testing::keys;
using bbox::testing::pubs;

namespace {

constexpr std::uint64_t kMaxVerifications = 8;

// One group of three aggregators and a single sensor, driven by hand.
struct GroupTest : ::testing::Test {
  crypto::SigningKey msp = key("msp");
  crypto::SigningKey admin_key = key("admin:g");
  std::vector<crypto::SigningKey> orderers = keys("orderer", 4);
  std::vector<crypto::SigningKey> aggr_keys = keys("aggr", 3);
  ledger::Ledger chain = genesis();
  membership::LocalAdmin admin{admin_key, "g"};
  std::vector<std::unique_ptr<AggregatorActor>> aggrs;
  std::vector<FakeContext> ctxs;
  std::unique_ptr<SensorActor> sensor;

  ledger::Ledger genesis() const {
    ledger::SystemConfig c;
    c.orderers = pubs(orderers);
    c.local_admins = {admin_key.public_key()};
    c.aggregators = pubs(aggr_keys);
    c.policy.tau = 2;
    c.policy.max_verifications = kMaxVerifications;
    return ledger::Ledger(ledger::make_genesis(msp.public_key(), c));
  }

  void SetUp() override {
    for (std::size_t i = 0; i < aggr_keys.size(); ++i) {
      AggregatorConfig cfg;
      cfg.group = "g";
      cfg.admin = admin_key.public_key();
      aggrs.push_back(std::make_unique<AggregatorActor>("aggr:g:" + std::to_string(i), aggr_keys[i], chain, cfg));
      ctxs.emplace_back(static_cast<net::ActorId>(i), 100 + i);
    }
    membership::GroupUpdate al;
    for (const auto& k : aggr_keys) al = admin.adopt_aggregator(k.public_key());
    auto j = admin.sensor_join(chain, 256, Bytes(32, 7));
    ASSERT_TRUE(j);
    for (std::size_t i = 0; i < aggrs.size(); ++i) {
      for (std::size_t k = 0; k < aggrs.size(); ++k) ctxs[i].directory[aggr_keys[k].public_key()] = static_cast<net::ActorId>(k);
      aggrs[i]->on_message(ctxs[i], 99, net::GroupPush{al});
      aggrs[i]->on_message(ctxs[i], 99, net::GroupPush{j.value().update});
    }
    sensor = std::make_unique<SensorActor>("sensor:g:0", j.value().credentials.public_key,
                                           std::move(j.value().credentials.state), SensorActor::Config{});
  }

  std::array<net::BroadcastFrame, 3> next_round(const std::string& reading) {
    auto f = sensor->broadcast_round(as_bytes(reading));
    EXPECT_TRUE(f.has_value());
    return *f;
  }

  void deliver(std::size_t i, const std::array<net::BroadcastFrame, 3>& frames) {
    for (const auto& f : frames) aggrs[i]->on_message(ctxs[i], 50, f);
  }

  // Forwards every AgreeAnnounce / AgreeAlarm sent so far between aggregators.
  void exchange() {
    for (int pass = 0; pass < 3; ++pass) {
      std::vector<std::pair<std::size_t, net::Message>> inbox;
      for (std::size_t i = 0; i < ctxs.size(); ++i) {
        for (auto& s : ctxs[i].sent) {
          if (std::holds_alternative<net::AgreeAnnounce>(s.msg) || std::holds_alternative<net::AgreeAlarm>(s.msg))
            inbox.emplace_back(s.to, s.msg);
        }
        std::erase_if(ctxs[i].sent, [](const FakeContext::Sent& s) {
          return std::holds_alternative<net::AgreeAnnounce>(s.msg) || std::holds_alternative<net::AgreeAlarm>(s.msg);
        });
      }
      for (auto& [to, m] : inbox) aggrs[to]->on_message(ctxs[to], 0, m);
    }
  }

  // Fires every pending agreement deadline.
  void close_agreement() {
    for (std::size_t i = 0; i < ctxs.size(); ++i) {
      auto timers = std::move(ctxs[i].timers);
      ctxs[i].timers.clear();
      for (auto& [at, t] : timers) {
        if (t.kind == kAgreeDeadline) aggrs[i]->on_message(ctxs[i], static_cast<net::ActorId>(i), t);
      }
    }
  }

  std::size_t responsible() const {
    for (std::size_t i = 0; i < aggrs.size(); ++i) {
      if (aggrs[i]->responsible_for(sensor->public_key())) return i;
    }
    return aggrs.size();
  }

  const FakeContext::Row& last_verify(std::size_t i) const {
    for (auto it = ctxs[i].rows.rbegin(); it != ctxs[i].rows.rend(); ++it) {
      if (it->op == "verify") return *it;
    }
    throw std::runtime_error("no verify row");
  }
};

}  // namespace

TEST_F(GroupTest, ExactlyOneAggregatorIsResponsible) {
  std::size_t count = 0;
  for (const auto& a : aggrs) count += a->responsible_for(sensor->public_key()) ? 1 : 0;
  EXPECT_EQ(count, 1u);
  EXPECT_EQ(responsible(), responsible_index(sensor->public_key(), 3));
}

TEST_F(GroupTest, ConsecutiveRoundsCostOneWalkAndOneBindingHash) {
  for (int r = 0; r < 5; ++r) {
    deliver(0, next_round("reading" + std::to_string(r)));
    const auto& row = last_verify(0);
    EXPECT_EQ(row.outcome, "accept");
    EXPECT_EQ(row.walk_length, 1u);
    EXPECT_EQ(row.hash_ops, 2u);
  }
  EXPECT_EQ(aggrs[0]->cl().at(sensor->public_key()).accepted, 5u);
}

TEST_F(GroupTest, WalkLengthIsGapPlusOne) {
  deliver(0, next_round("first"));
  for (std::uint64_t g : {0u, 1u, 3u, 7u}) {
    for (std::uint64_t k = 0; k < g; ++k) next_round("lost");
    deliver(0, next_round("after gap " + std::to_string(g)));
    EXPECT_EQ(last_verify(0).outcome, "accept") << g;
    EXPECT_EQ(last_verify(0).walk_length, g + 1) << g;
  }
}

TEST_F(GroupTest, GapAtMaxVerificationsFlagsRejoin) {
  deliver(0, next_round("first"));
  for (std::uint64_t k = 0; k < kMaxVerifications; ++k) next_round("lost");
  deliver(0, next_round("too late"));
  EXPECT_EQ(last_verify(0).outcome, "AnchorNotReached");
  EXPECT_LE(last_verify(0).hash_ops, kMaxVerifications);
  EXPECT_TRUE(aggrs[0]->cl().at(sensor->public_key()).needs_rejoin);
  ASSERT_FALSE(ctxs[0].logs.empty());
  EXPECT_EQ(ctxs[0].logs.back()["event"], "rejoin_required");
}

TEST_F(GroupTest, RandomKeyWalkIsBoundedByMaxVerifications) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    Bytes junk(32);
    for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
    std::array<net::BroadcastFrame, 3> frames{
        net::BroadcastFrame{sensor->public_key(), static_cast<std::uint32_t>(t), net::FrameType::Payload, to_bytes("x")},
        net::BroadcastFrame{sensor->public_key(), static_cast<std::uint32_t>(t), net::FrameType::Hash, junk},
        net::BroadcastFrame{sensor->public_key(), static_cast<std::uint32_t>(t), net::FrameType::SecretKey, junk}};
    deliver(1, frames);
    EXPECT_NE(last_verify(1).outcome, "accept");
    EXPECT_LE(last_verify(1).hash_ops, kMaxVerifications);
  }
}

TEST_F(GroupTest, UnknownSensorIsTraced) {
  net::BroadcastFrame f{sha256(as_bytes("stranger")), 0, net::FrameType::SecretKey, Bytes(32, 1)};
  aggrs[0]->on_message(ctxs[0], 9, f);
  EXPECT_EQ(ctxs[0].outcomes("verify"), std::vector<std::string>{"UnknownSensor"});
}

TEST_F(GroupTest, FlippedPayloadFailsBinding) {
  auto frames = next_round("genuine");
  frames[0].data = to_bytes("genuine|forged");
  deliver(0, frames);
  EXPECT_EQ(last_verify(0).outcome, "BindingMismatch");
  ASSERT_FALSE(ctxs[0].logs.empty());
  EXPECT_EQ(ctxs[0].logs.back()["event"], "alarm");
  EXPECT_EQ(ctxs[0].logs.back()["reason"], "BindingMismatch");
}

TEST_F(GroupTest, AgreementClearsIntoResponsiblePset) {
  auto frames = next_round("hello");
  for (std::size_t i = 0; i < 3; ++i) deliver(i, frames);
  exchange();
  close_agreement();
  auto r = responsible();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(aggrs[i]->pset().size(), i == r ? 1u : 0u);
    EXPECT_EQ(ctxs[i].outcomes("agree"), std::vector<std::string>{"Clear"});
  }
}

TEST_F(GroupTest, RewrittenPayloadOnOneLinkRaisesAlarm) {
  auto frames = next_round("true value");
  auto forged = frames;
  // a man in the middle with knowledge of the public previous key recomputes sigma1
  ChainHash h(256);
  auto sigma2 = HashDigest::from_bytes(frames[2].data);
  forged[0].data = to_bytes("true value|forged");
  auto s1 = chainsig::bind_message(h, forged[0].data, h(sigma2));
  forged[1].data = Bytes(s1.bytes().begin(), s1.bytes().end());

  auto r = responsible();
  auto victim = (r + 1) % 3;
  for (std::size_t i = 0; i < 3; ++i) deliver(i, i == victim ? forged : frames);
  EXPECT_EQ(last_verify(victim).outcome, "accept");  // undetectable in isolation
  exchange();
  close_agreement();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(aggrs[i]->pset().empty()) << i;
    EXPECT_EQ(aggrs[i]->agree_state(sensor->public_key(), sigma2), AgreeResult::Alarm) << i;
  }
  std::size_t alarms = 0;
  for (const auto& c : ctxs) alarms += c.outcomes("agree").empty() ? 0 : 1;
  EXPECT_GT(alarms, 0u);
}

TEST_F(GroupTest, EndorserRefusesConflictingPayload) {
  auto frames = next_round("value");
  for (std::size_t i = 0; i < 3; ++i) deliver(i, frames);
  exchange();
  close_agreement();
  auto r = responsible();
  auto other = (r + 1) % 3;
  ctxs[r].clear();
  aggrs[r]->on_message(ctxs[r], r, net::Timer{kSendTx, 0, 0});
  auto reqs = ctxs[r].sent_of<net::EndorseRequest>();
  ASSERT_EQ(reqs.size(), 2u);

  aggrs[other]->on_message(ctxs[other], static_cast<net::ActorId>(r), reqs[0]);
  auto forged = reqs[0];
  forged.tx.payload[0].message = to_bytes("value|forged");
  aggrs[other]->on_message(ctxs[other], static_cast<net::ActorId>(r), forged);
  auto replies = ctxs[other].sent_of<net::EndorseReply>();
  ASSERT_EQ(replies.size(), 2u);
  EXPECT_TRUE(replies[0].endorsement.has_value());
  EXPECT_FALSE(replies[1].endorsement.has_value());

  aggrs[r]->on_message(ctxs[r], static_cast<net::ActorId>(other), replies[0]);
  EXPECT_EQ(aggrs[r]->txset_size(), 1u);
}

TEST_F(GroupTest, MissingEndorsementsStallAndRequeue) {
  auto frames = next_round("value");
  for (std::size_t i = 0; i < 3; ++i) deliver(i, frames);
  exchange();
  close_agreement();
  auto r = responsible();
  ctxs[r].clear();
  aggrs[r]->on_message(ctxs[r], r, net::Timer{kSendTx, 0, 0});
  EXPECT_TRUE(aggrs[r]->pset().empty());
  EXPECT_EQ(aggrs[r]->inflight_size(), 1u);
  std::optional<net::Timer> deadline;
  for (auto& [at, t] : ctxs[r].timers) {
    if (t.kind == kEndorseDeadline) deadline = t;
  }
  ASSERT_TRUE(deadline);
  aggrs[r]->on_message(ctxs[r], r, *deadline);
  EXPECT_EQ(ctxs[r].outcomes("send_tx"), std::vector<std::string>{"TxStalled"});
  EXPECT_EQ(ctxs[r].logs.back()["event"], "tx_stalled");
  EXPECT_EQ(aggrs[r]->inflight_size(), 0u);
  EXPECT_EQ(aggrs[r]->pset().size(), 1u);
}

TEST_F(GroupTest, UpdateBcIsIdempotentAndBuffersFutureBlocks) {
  auto& a = *aggrs[0];
  auto tx1 = bbox::testing::make_tx(aggr_keys[0], {aggr_keys[0], aggr_keys[1]}, 1);
  auto tx2 = bbox::testing::make_tx(aggr_keys[1], {aggr_keys[1], aggr_keys[2]}, 2);
  ledger::Ledger shadow = chain;
  auto b1 = bbox::testing::next_tx_block(shadow, {tx1}, orderers);
  shadow.append(b1);
  auto b2 = bbox::testing::next_tx_block(shadow, {tx2}, orderers);
  shadow.append(b2);

  EXPECT_FALSE(a.update_bc(nullptr, b2));  // ahead of the replica: buffered
  EXPECT_EQ(a.ledger().height(), 1u);
  EXPECT_TRUE(a.update_bc(nullptr, b1));
  EXPECT_EQ(a.ledger().height(), 3u);
  EXPECT_TRUE(a.update_bc(nullptr, b1));
  EXPECT_TRUE(a.update_bc(nullptr, b2));
  EXPECT_EQ(a.ledger().height(), 3u);
  EXPECT_EQ(a.ledger().tip_hash(), shadow.tip_hash());

  auto tampered = b1;
  tampered.transactions[0].payload[0].message = to_bytes("other");
  EXPECT_FALSE(a.update_bc(nullptr, tampered));
  auto revalidate = bbox::testing::next_tx_block(a.ledger(), {tx1}, orderers);
  EXPECT_FALSE(a.update_bc(nullptr, revalidate));  // nonce already committed
  EXPECT_EQ(a.ledger().height(), 3u);
}

TEST_F(GroupTest, TransferSealsStateForTheRecipientOnly) {
  // the recipient belongs to another group but is on PL
  auto dst_key = key("aggr:h:0");
  auto outsider = key("aggr:h:1");
  auto cfg = chain.config();
  cfg.epoch = 1;
  cfg.aggregators.push_back(dst_key.public_key());
  cfg.aggregators.push_back(outsider.public_key());
  auto cb = ledger::apply_config_update(chain.blocks(), ledger::ConfigUpdate::sign(cfg, msp));
  bbox::testing::sign_quorum(cb, orderers);
  for (auto& a : aggrs) ASSERT_TRUE(a->update_bc(nullptr, cb));
  ledger::Ledger with_dst = chain;
  with_dst.append(cb);

  auto r = responsible();
  deliver(r, next_round("before"));
  ASSERT_TRUE(aggrs[r]->sensor_transfer(ctxs[r], sensor->public_key(), dst_key.public_key()));
  EXPECT_FALSE(aggrs[r]->cl().contains(sensor->public_key()));
  EXPECT_EQ(ctxs[r].logs.back()["event"], "transfer_sealed");
  EXPECT_EQ(ctxs[r].logs.back()["last_round"], 0);

  ctxs[r].clear();
  aggrs[r]->on_message(ctxs[r], r, net::Timer{kSendTx, 0, 0});
  auto reqs = ctxs[r].sent_of<net::EndorseRequest>();
  ASSERT_FALSE(reqs.empty());
  ASSERT_EQ(reqs[0].tx.transfers.size(), 1u);
  const auto& rec = reqs[0].tx.transfers[0];
  EXPECT_EQ(rec.recipient, dst_key.public_key());

  EXPECT_FALSE(crypto::open(outsider, rec.sealed_state).has_value());
  for (const auto& k : aggr_keys) EXPECT_FALSE(crypto::open(k, rec.sealed_state).has_value());
  ASSERT_TRUE(crypto::open(dst_key, rec.sealed_state).has_value());

  AggregatorConfig hcfg;
  hcfg.group = "h";
  hcfg.admin = key("admin:h").public_key();
  AggregatorActor wrong("aggr:h:1", outsider, with_dst, hcfg);
  EXPECT_EQ(wrong.install_transfer(nullptr, rec).code(), ErrorCode::TransferFailed);
  AggregatorActor dst("aggr:h:0", dst_key, with_dst, hcfg);
  ASSERT_TRUE(dst.install_transfer(nullptr, rec));
  EXPECT_TRUE(dst.responsible_for(sensor->public_key()));

  // two rounds are lost in transit, then the recipient resumes
  next_round("lost 1");
  next_round("lost 2");
  FakeContext dctx;
  for (const auto& f : next_round("after")) dst.on_message(dctx, 50, f);
  ASSERT_EQ(dctx.outcomes("verify"), std::vector<std::string>{"accept"});
  EXPECT_EQ(dctx.rows.front().walk_length, 3u);
  bool resumed = false;
  for (const auto& l : dctx.logs) {
    if (l["event"] == "transfer_resumed") {
      resumed = true;
      EXPECT_EQ(l["round"], 3);
      EXPECT_EQ(l["walk_length"], 3);
    }
  }
  EXPECT_TRUE(resumed);
}

TEST_F(GroupTest, TransferRequiresBothEndpointsOnPl) {
  auto r = responsible();
  EXPECT_EQ(aggrs[r]->sensor_transfer(ctxs[r], sensor->public_key(), key("nobody").public_key()).code(),
            ErrorCode::TransferFailed);
  EXPECT_EQ(aggrs[r]->sensor_transfer(ctxs[r], sha256(as_bytes("ghost")), aggr_keys[(r + 1) % 3].public_key()).code(),
            ErrorCode::UnknownSensor);
}

TEST_F(GroupTest, ForeignTransferOrderIgnored) {
  auto r = responsible();
  net::TransferOrder o{"g", sensor->public_key(), aggr_keys[(r + 1) % 3].public_key(), {}, {}};
  o.sign(key("admin:other"));
  aggrs[r]->on_message(ctxs[r], 99, o);
  EXPECT_EQ(ctxs[r].outcomes("transfer"), std::vector<std::string>{"AuthError"});
  EXPECT_TRUE(aggrs[r]->cl().contains(sensor->public_key()));
}
