#pragma once

// Device-group data path: sensors broadcast three frames per reading, group
// aggregators verify them against their CL, cross-check each other (AggrAgree)
// within delta, and the responsible aggregator packages cleared readings into
// endorsed transactions.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bbox/chainsig.hpp"
#include "bbox/crypto.hpp"
#include "bbox/ledger.hpp"
#include "bbox/membership.hpp"
#include "bbox/messages.hpp"

namespace bbox::devicegroup {

using net::ActorId;
using net::BroadcastFrame;
using net::Context;
using net::FrameType;
using net::Message;
using net::Observation;
using net::Time;

inline constexpr Time kDefaultSensorPeriod = 10000;

enum TimerKind : std::uint32_t {
  kSensorTick = 1,
  kAgreeDeadline = 2,
  kSendTx = 3,
  kEndorseDeadline = 4,
  kResubmit = 5,
};

inline Bytes encode_verifier_state(const chainsig::VerifierState& v) {
  ByteWriter w;
  w.str("bbox/verifier/v1").blob(v.anchor.bytes()).u64(v.max_verifications);
  return std::move(w).take();
}

inline chainsig::VerifierState decode_verifier_state(ByteView data) {
  ByteReader r(data);
  if (r.str() != "bbox/verifier/v1") throw Error(ErrorCode::Decode, "bad verifier state tag");
  chainsig::VerifierState v;
  v.anchor = HashDigest::from_bytes(r.blob());
  v.max_verifications = r.u64();
  r.expect_end();
  return v;
}

// Deterministic responsible aggregator: sensor pk hashed mod |AL|.
inline std::size_t responsible_index(const HashDigest& sensor, std::size_t group_size) {
  auto d = sha256(sensor.bytes());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return static_cast<std::size_t>(v % group_size);
}

class SensorActor : public net::Actor {
 public:
  struct Config {
    Time period = kDefaultSensorPeriod;
    Time start_offset = 0;
    std::uint64_t rounds = 0;  // 0: until the chain is exhausted
  };

  SensorActor(std::string name, HashDigest pk, chainsig::ChainKeyState state, Config config)
      : name_(std::move(name)), pk_(pk), state_(std::move(state)), config_(config) {}

  const std::string& name() const { return name_; }
  const HashDigest& public_key() const { return pk_; }
  bool offline() const { return offline_; }
  std::uint32_t rounds_sent() const { return round_; }
  const std::vector<Bytes>& sent() const { return sent_; }
  const chainsig::ChainKeyState& state() const { return state_; }

  // One signature, emitted as payload / hash / secretKey frames.
  std::optional<std::array<BroadcastFrame, 3>> broadcast_round(ByteView reading,
                                                               chainsig::SignStats* stats = nullptr) {
    if (offline_) return std::nullopt;
    chainsig::ChainSignature sig;
    try {
      sig = chainsig::ot_sign(state_, reading, stats);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ChainExhausted) throw;
      offline_ = true;
      return std::nullopt;
    }
    auto r = round_++;
    sent_.emplace_back(reading.begin(), reading.end());
    auto d = [](const HashDigest& h) { return Bytes(h.bytes().begin(), h.bytes().end()); };
    return std::array<BroadcastFrame, 3>{BroadcastFrame{pk_, r, FrameType::Payload, Bytes(reading.begin(), reading.end())},
                                         BroadcastFrame{pk_, r, FrameType::Hash, d(sig.sigma1)},
                                         BroadcastFrame{pk_, r, FrameType::SecretKey, d(sig.sigma2)}};
  }

  void on_start(Context& ctx) override { ctx.schedule(config_.start_offset, {kSensorTick, 0, 0}); }

  void on_message(Context& ctx, ActorId, const Message& msg) override {
    const auto* t = std::get_if<net::Timer>(&msg);
    if (!t || t->kind != kSensorTick) return;  // broadcast-only: inbound traffic is ignored
    if (config_.rounds && round_ >= config_.rounds) return;
    auto reading = name_ + ":r" + std::to_string(round_) + ":v" + std::to_string(ctx.rng()() % 100000);
    chainsig::SignStats stats;
    auto frames = broadcast_round(as_bytes(reading), &stats);
    if (!frames) {
      ctx.trace("sign", 0, 0, "ChainExhausted");
      ctx.log({{"event", "sensor_offline"}, {"sensor", name_}});
      return;
    }
    ctx.trace("sign", stats.derivation_hashes + stats.binding_hashes, 0, "ok");
    for (auto to : ctx.radio_neighbors()) {
      for (const auto& f : *frames) ctx.send(to, f);
    }
    ctx.schedule(config_.period, {kSensorTick, 0, 0});
  }

 private:
  std::string name_;
  HashDigest pk_;
  chainsig::ChainKeyState state_;
  Config config_;
  std::uint32_t round_ = 0;
  bool offline_ = false;
  std::vector<Bytes> sent_;
};

struct AggregatorConfig {
  std::string group;
  crypto::PublicKey admin;  // the group's local administrator
  Time delta = 100;
  Time tx_period = kDefaultSensorPeriod;
  Time tx_offset = 0;
  Time endorse_timeout = 1000;
  Time resubmit_timeout = 5000;
};

struct SensorEntry {
  chainsig::VerifierState verifier;
  bool transferred = false;  // installed from a sealed transfer: this aggregator is responsible
  bool needs_rejoin = false;
  std::uint64_t accepted = 0;
  std::optional<std::uint32_t> last_round;
};

enum class AgreeResult { Pending, Clear, Alarm };

class AggregatorActor : public net::Actor {
 public:
  AggregatorActor(std::string name, crypto::SigningKey key, ledger::Ledger replica, AggregatorConfig config)
      : name_(std::move(name)), key_(std::move(key)), ledger_(std::move(replica)), config_(std::move(config)) {}

  const std::string& name() const { return name_; }
  const crypto::PublicKey& public_key() const { return key_.public_key(); }
  const ledger::Ledger* replica() const override { return &ledger_; }
  const ledger::Ledger& ledger() const { return ledger_; }
  const std::map<HashDigest, SensorEntry>& cl() const { return cl_; }
  const std::vector<crypto::PublicKey>& group_aggregators() const { return al_; }
  const std::vector<Observation>& pset() const { return pset_; }
  std::size_t txset_size() const { return txset_.size(); }
  std::size_t inflight_size() const { return inflight_.size(); }
  const AggregatorConfig& config() const { return config_; }

  // Direct setup (SensorJoin / AggrUpd applied before the run starts).
  void install_sensor(const HashDigest& pk) {
    cl_.try_emplace(pk, SensorEntry{{pk, ledger_.config().policy.max_verifications}, false, false, 0, std::nullopt});
  }
  void set_group_aggregators(std::vector<crypto::PublicKey> al) { al_ = std::move(al); }

  bool responsible_for(const HashDigest& sensor) const {
    auto it = cl_.find(sensor);
    if (it != cl_.end() && it->second.transferred) return true;
    if (al_.empty()) return false;
    return al_[responsible_index(sensor, al_.size())] == public_key();
  }

  // Verifies one reassembled round against CL.
  Result<chainsig::VerifyOutcome> aggregator_receive(std::span<const BroadcastFrame> frames,
                                                     const HashDigest& sensor_pk) {
    auto it = cl_.find(sensor_pk);
    if (it == cl_.end()) return Status(ErrorCode::UnknownSensor, "sensor not in CL");
    const Bytes* payload = nullptr;
    chainsig::ChainSignature sig;
    try {
      for (const auto& f : frames) {
        if (f.sensor != sensor_pk) continue;
        if (f.type == FrameType::Payload) payload = &f.data;
        if (f.type == FrameType::Hash) sig.sigma1 = HashDigest::from_bytes(f.data);
        if (f.type == FrameType::SecretKey) sig.sigma2 = HashDigest::from_bytes(f.data);
      }
    } catch (const Error&) {
      return chainsig::VerifyOutcome{};
    }
    if (!payload || sig.sigma2.empty()) return chainsig::VerifyOutcome{};
    auto& entry = it->second;
    entry.verifier.max_verifications = ledger_.config().policy.max_verifications;
    auto out = chainsig::ot_verify(entry.verifier, *payload, sig);
    if (out.accepted) {
      entry.verifier = out.next;
      entry.needs_rejoin = false;
      ++entry.accepted;
    } else if (out.reason == chainsig::Rejection::AnchorNotReached) {
      entry.needs_rejoin = true;
    }
    return out;
  }

  // AggrAgree: record our own view and announce it to the rest of the group.
  void aggr_agree(Context& ctx, Observation obs) {
    auto key = std::make_pair(obs.sensor, obs.signature.sigma2);
    auto& rec = records_[key];
    rec.seen.insert(obs.message);
    bool conflict = rec.seen.size() > 1;
    rec.own = obs;
    net::AgreeAnnounce a{config_.group, obs, public_key(), {}};
    a.signature = key_.sign(a.signing_bytes());
    for (const auto& peer : al_) {
      if (peer == public_key()) continue;
      if (auto id = ctx.address_of(peer)) ctx.send(*id, a);
    }
    if (conflict && !rec.alarmed) raise_alarm(ctx, key, rec);
    auto id = next_timer_id_++;
    pending_clear_[id] = key;
    ctx.schedule(config_.delta, {kAgreeDeadline, id, 0});
  }

  AgreeResult agree_state(const HashDigest& sensor, const HashDigest& sigma2) const {
    auto it = records_.find({sensor, sigma2});
    if (it == records_.end()) return AgreeResult::Pending;
    if (it->second.alarmed) return AgreeResult::Alarm;
    return it->second.cleared ? AgreeResult::Clear : AgreeResult::Pending;
  }

  // UpdateBC: append iff the block validates; replays of committed heights are no-ops.
  bool update_bc(Context* ctx, const ledger::Block& block) {
    if (block.height < ledger_.height()) return ledger_.blocks()[block.height].hash() == block.hash();
    if (block.height > ledger_.height()) {
      if (ledger::check_quorum(ledger_.config(), block) == ledger::BlockFault::None) future_.emplace(block.height, block);
      return false;
    }
    if (!ledger_.check(block)) {
      if (ctx) ctx->trace("update_bc", 0, 0, std::string(to_string(ledger_.check(block).fault)));
      return false;
    }
    ledger_.append_unchecked(block);
    on_commit(ctx, ledger_.tip());
    for (auto it = future_.begin(); it != future_.end() && it->first <= ledger_.height();) {
      if (it->first == ledger_.height() && ledger_.check(it->second)) {
        ledger_.append_unchecked(it->second);
        on_commit(ctx, ledger_.tip());
      }
      it = future_.erase(it);
    }
    return true;
  }

  // SensorTransfer, source side: seal our verifier state to the receiving
  // aggregator; the record rides in our next transaction.
  Status sensor_transfer(Context& ctx, const HashDigest& sensor, const crypto::PublicKey& dst) {
    if (!ledger_.config().is_aggregator(dst) || !ledger_.config().is_aggregator(public_key()))
      return Status(ErrorCode::TransferFailed, "both aggregators must be on PL");
    auto it = cl_.find(sensor);
    if (it == cl_.end()) return Status(ErrorCode::UnknownSensor, "sensor not in CL");
    Bytes seed(32);
    for (auto& b : seed) b = static_cast<std::uint8_t>(ctx.rng()());
    ledger::TransferRecord rec{sensor, dst, crypto::seal(dst, encode_verifier_state(it->second.verifier), seed)};
    nlohmann::json last = nullptr;
    if (it->second.last_round) last = *it->second.last_round;
    ctx.log({{"event", "transfer_sealed"}, {"aggregator", name_}, {"sensor", sensor.hex().substr(0, 16)},
             {"last_round", last}, {"recipient", dst.short_hex()}});
    cl_.erase(it);
    for (auto& [k, r] : records_) {
      if (k.first == sensor) r.alarmed = true;  // nothing of this sensor is submitted from here any more
    }
    pset_.erase(std::remove_if(pset_.begin(), pset_.end(), [&](const Observation& o) { return o.sensor == sensor; }),
                pset_.end());
    pending_transfers_.push_back(std::move(rec));
    ctx.trace("transfer_out", 0, 0, "sealed");
    return Status::ok();
  }

  // SensorTransfer, receiving side.
  Status install_transfer(Context* ctx, const ledger::TransferRecord& rec) {
    auto plain = crypto::open(key_, rec.sealed_state);
    Status s;
    if (!plain) {
      s = Status(ErrorCode::TransferFailed, "cannot open sealed state");
    } else {
      try {
        auto v = decode_verifier_state(*plain);
        cl_[rec.sensor_pk] = SensorEntry{v, true, false, 0, std::nullopt};
      } catch (const Error& e) {
        s = Status(ErrorCode::TransferFailed, e.what());
      }
    }
    if (ctx) {
      ctx->trace("transfer_in", 0, 0, s ? "installed" : "TransferFailed");
      ctx->log({{"event", s ? "transfer_installed" : "transfer_failed"}, {"aggregator", name_},
                {"sensor", rec.sensor_pk.hex().substr(0, 16)}});
    }
    return s;
  }

  // AggrSendTx: package pset with a fresh nonce, self-endorse, fan out for endorsements.
  void aggr_send_tx(Context& ctx) {
    if (pset_.empty() && pending_transfers_.empty()) return;
    const auto& cfg = ledger_.config();
    if (!cfg.is_aggregator(public_key())) {
      ctx.trace("send_tx", 0, 0, "Unauthorized");
      pset_.clear();
      pending_transfers_.clear();
      return;
    }
    ledger::Transaction tx;
    tx.payload.reserve(pset_.size());
    for (auto& o : pset_) tx.payload.push_back({o.sensor, std::move(o.message), std::move(o.signature)});
    pset_.clear();
    tx.transfers = std::move(pending_transfers_);
    pending_transfers_.clear();
    tx.nonce.resize(ledger::kNonceBytes);
    for (auto& b : tx.nonce) b = static_cast<std::uint8_t>(ctx.rng()());
    tx.submitter = public_key();
    tx.endorsements.push_back({public_key(), tx.endorse(key_)});

    auto id = next_timer_id_++;
    auto& fl = inflight_[tx.nonce];
    fl.tx = std::move(tx);
    fl.timer = id;
    inflight_by_timer_[id] = fl.tx.nonce;
    if (fl.tx.endorsements.size() >= cfg.policy.tau) {
      submit(ctx, fl.tx.nonce);
      return;
    }
    net::EndorseRequest req{fl.tx};
    for (const auto& pk : cfg.aggregators) {
      if (pk == public_key()) continue;
      if (auto to = ctx.address_of(pk)) ctx.send(*to, req);
    }
    ctx.schedule(config_.endorse_timeout, {kEndorseDeadline, id, 0});
  }

  void on_start(Context& ctx) override {
    ctx.schedule(config_.tx_offset + config_.tx_period, {kSendTx, 0, 0});
    ctx.schedule(config_.resubmit_timeout, {kResubmit, 0, 0});
  }

  void on_message(Context& ctx, ActorId from, const Message& msg) override {
    std::visit([&](const auto& m) { handle(ctx, from, m); }, msg);
  }

 private:
  struct AgreeRecord {
    std::optional<Observation> own;
    std::set<Bytes> seen;
    bool alarmed = false;
    bool cleared = false;
  };
  using RecordKey = std::pair<HashDigest, HashDigest>;

  struct Partial {
    std::vector<BroadcastFrame> frames;
  };

  struct InFlight {
    ledger::Transaction tx;
    std::uint64_t timer = 0;
  };

  struct Submitted {
    ledger::Transaction tx;
    Time submitted_at = 0;
  };

  void handle(Context& ctx, ActorId, const BroadcastFrame& f) {
    if (!cl_.contains(f.sensor)) {
      if (f.type == FrameType::SecretKey) ctx.trace("verify", 0, 0, "UnknownSensor");
      return;
    }
    auto& rounds = partial_[f.sensor];
    auto& p = rounds[f.round];
    p.frames.push_back(f);
    while (rounds.size() > 4) rounds.erase(rounds.begin());
    if (f.type != FrameType::SecretKey) return;
    auto frames = std::move(p.frames);
    rounds.erase(f.round);
    if (rounds.empty()) partial_.erase(f.sensor);

    auto res = aggregator_receive(frames, f.sensor);
    if (!res) {
      ctx.trace("verify", 0, 0, std::string(to_string(res.code())));
      return;
    }
    const auto& out = res.value();
    ctx.trace("verify", out.hash_ops(), out.walk_length, out.accepted ? "accept" : std::string(to_string(out.reason)));
    if (!out.accepted) {
      if (out.reason == chainsig::Rejection::AnchorNotReached)
        ctx.log({{"event", "rejoin_required"}, {"aggregator", name_}, {"sensor", f.sensor.hex().substr(0, 16)}});
      // the key walk checked out, so the payload or sigma1 was altered in transit
      if (out.reason == chainsig::Rejection::BindingMismatch)
        ctx.log({{"event", "alarm"}, {"aggregator", name_}, {"sensor", f.sensor.hex().substr(0, 16)},
                 {"round", f.round}, {"reason", "BindingMismatch"}});
      return;
    }
    auto& entry = cl_.at(f.sensor);
    if (entry.transferred && entry.accepted == 1)
      ctx.log({{"event", "transfer_resumed"}, {"aggregator", name_}, {"sensor", f.sensor.hex().substr(0, 16)},
               {"round", f.round}, {"walk_length", out.walk_length}});
    entry.last_round = f.round;
    Observation obs{f.sensor, {}, {}};
    for (const auto& fr : frames) {
      if (fr.type == FrameType::Payload) obs.message = fr.data;
      if (fr.type == FrameType::Hash) obs.signature.sigma1 = HashDigest::from_bytes(fr.data);
      if (fr.type == FrameType::SecretKey) obs.signature.sigma2 = HashDigest::from_bytes(fr.data);
    }
    obs.signature.index_hint = f.round;
    aggr_agree(ctx, std::move(obs));
  }

  bool group_peer(const crypto::PublicKey& pk) const {
    return pk != public_key() && std::find(al_.begin(), al_.end(), pk) != al_.end();
  }

  void handle(Context& ctx, ActorId, const net::AgreeAnnounce& a) {
    if (a.group != config_.group || !group_peer(a.sender) || !crypto::verify(a.sender, a.signing_bytes(), a.signature)) {
      ctx.trace("agree_in", 0, 0, "AuthError");
      return;
    }
    // the announced pair must at least be self-consistent: sigma1 = h(m || h(sigma2))
    const auto& o = a.observation;
    if (o.signature.sigma2.empty() || o.signature.sigma1.size() != o.signature.sigma2.size()) return;
    ChainHash h(static_cast<unsigned>(o.signature.sigma2.size() * 8));
    if (chainsig::bind_message(h, o.message, h(o.signature.sigma2)) != o.signature.sigma1) {
      ctx.trace("agree_in", 2, 0, "BindingMismatch");
      return;
    }
    auto key = std::make_pair(o.sensor, o.signature.sigma2);
    auto& rec = records_[key];
    rec.seen.insert(o.message);
    if (rec.seen.size() > 1 && !rec.alarmed) raise_alarm(ctx, key, rec);
  }

  void handle(Context& ctx, ActorId, const net::AgreeAlarm& a) {
    if (a.group != config_.group || !group_peer(a.sender) || !crypto::verify(a.sender, a.signing_bytes(), a.signature)) {
      ctx.trace("alarm_in", 0, 0, "AuthError");
      return;
    }
    auto& rec = records_[{a.sensor, a.key}];
    if (rec.alarmed) return;
    rec.alarmed = true;
    discard(a.sensor, a.key);
    ctx.trace("alarm_in", 0, 0, "Alarm");
    ctx.log({{"event", "alarm_received"}, {"aggregator", name_}, {"sensor", a.sensor.hex().substr(0, 16)},
             {"from", a.sender.short_hex()}});
  }

  void raise_alarm(Context& ctx, const RecordKey& key, AgreeRecord& rec) {
    rec.alarmed = true;
    discard(key.first, key.second);
    net::AgreeAlarm alarm{config_.group, key.first, key.second, *rec.seen.begin(), *std::next(rec.seen.begin()),
                          public_key(), {}};
    alarm.signature = key_.sign(alarm.signing_bytes());
    for (const auto& peer : al_) {
      if (peer == public_key()) continue;
      if (auto id = ctx.address_of(peer)) ctx.send(*id, alarm);
    }
    ctx.trace("agree", 0, 0, "Alarm");
    ctx.log({{"event", "alarm"}, {"aggregator", name_}, {"sensor", key.first.hex().substr(0, 16)},
             {"messages", {std::string(alarm.first.begin(), alarm.first.end()),
                           std::string(alarm.second.begin(), alarm.second.end())}}});
  }

  void discard(const HashDigest& sensor, const HashDigest& sigma2) {
    pset_.erase(std::remove_if(pset_.begin(), pset_.end(),
                               [&](const Observation& o) { return o.sensor == sensor && o.signature.sigma2 == sigma2; }),
                pset_.end());
  }

  void handle(Context& ctx, ActorId from, const net::EndorseRequest& req) {
    const auto& cfg = ledger_.config();
    net::EndorseReply reply{req.tx.nonce, std::nullopt};
    bool ok = cfg.is_aggregator(public_key()) && cfg.is_aggregator(req.tx.submitter) &&
              req.tx.nonce.size() == ledger::kNonceBytes && !ledger_.has_nonce(req.tx.nonce);
    for (const auto& p : req.tx.payload) {
      if (!ok) break;
      auto it = records_.find({p.sensor_pk, p.signature.sigma2});
      if (it != records_.end() && (it->second.alarmed || !it->second.seen.contains(p.message))) ok = false;
    }
    if (ok) reply.endorsement = ledger::Endorsement{public_key(), req.tx.endorse(key_)};
    ctx.trace("endorse", 0, 0, ok ? "ok" : "refused");
    ctx.send(from, reply);
  }

  void handle(Context& ctx, ActorId, const net::EndorseReply& rep) {
    auto it = inflight_.find(rep.nonce);
    if (it == inflight_.end() || !rep.endorsement) return;
    auto& tx = it->second.tx;
    const auto& e = *rep.endorsement;
    const auto& cfg = ledger_.config();
    for (const auto& have : tx.endorsements) {
      if (have.endorser == e.endorser) return;
    }
    if (!cfg.is_aggregator(e.endorser) || !crypto::verify(e.endorser, tx.signing_bytes(), e.signature)) return;
    tx.endorsements.push_back(e);
    if (tx.endorsements.size() >= cfg.policy.tau) submit(ctx, rep.nonce);
  }

  void submit(Context& ctx, const Bytes& nonce) {
    auto it = inflight_.find(nonce);
    if (it == inflight_.end()) return;
    inflight_by_timer_.erase(it->second.timer);
    auto& sub = txset_[nonce];
    sub.tx = std::move(it->second.tx);
    sub.submitted_at = ctx.now();
    inflight_.erase(it);
    send_to_orderers(ctx, sub.tx);
    ctx.trace("submit", 0, 0, "ok");
  }

  void send_to_orderers(Context& ctx, const ledger::Transaction& tx) {
    for (const auto& o : ledger_.config().orderers) {
      if (auto to = ctx.address_of(o)) ctx.send(*to, net::TxSubmit{tx, ledger_.height()});
    }
  }

  void handle(Context& ctx, ActorId, const net::TxSubmit&) { ctx.trace("tx_in", 0, 0, "ignored"); }
  void handle(Context&, ActorId, const net::ConfigSubmit&) {}

  void handle(Context& ctx, ActorId, const net::GroupPush& push) {
    const auto& u = push.update;
    if (u.group != config_.group || u.admin != config_.admin || !ledger_.config().is_local_admin(u.admin) ||
        !u.verify()) {
      ctx.trace("group_update", 0, 0, "AuthError");
      ctx.log({{"event", "group_update_rejected"}, {"aggregator", name_}, {"op", std::string(to_string(u.op))}});
      return;
    }
    if (u.sequence <= last_group_seq_) return;  // already applied (fan-out is idempotent)
    last_group_seq_ = u.sequence;
    switch (u.op) {
      case membership::GroupOp::AddSensor: install_sensor(u.sensor); break;
      case membership::GroupOp::RemoveSensor:
        cl_.erase(u.sensor);
        for (auto& [k, r] : records_) {
          if (k.first == u.sensor) r.alarmed = true;
        }
        pset_.erase(std::remove_if(pset_.begin(), pset_.end(), [&](const Observation& o) { return o.sensor == u.sensor; }),
                    pset_.end());
        break;
      case membership::GroupOp::SetAggregators: al_ = u.aggregators; break;
    }
    ctx.trace("group_update", 0, 0, std::string(to_string(u.op)));
  }

  void handle(Context& ctx, ActorId, const net::TransferOrder& o) {
    if (o.group != config_.group || o.admin != config_.admin || !ledger_.config().is_local_admin(o.admin) ||
        !o.verify()) {
      ctx.trace("transfer", 0, 0, "AuthError");
      return;
    }
    if (!responsible_for(o.sensor)) return;
    auto st = sensor_transfer(ctx, o.sensor, o.destination);
    ctx.trace("transfer", 0, 0, st ? "sealed" : std::string(to_string(st.code())));
  }

  void handle(Context& ctx, ActorId, const net::ConsensusMsg& m) {
    if (m.kind != net::ConsensusKind::BlockDeliver || !m.block) return;
    update_bc(&ctx, *m.block);
  }

  void handle(Context& ctx, ActorId, const net::Timer& t) {
    switch (t.kind) {
      case kAgreeDeadline: {
        auto it = pending_clear_.find(t.a);
        if (it == pending_clear_.end()) return;
        auto key = it->second;
        pending_clear_.erase(it);
        auto rec = records_.find(key);
        if (rec == records_.end() || !rec->second.own) return;
        if (rec->second.alarmed) {
          ctx.trace("agree", 0, 0, "Discarded");
          return;
        }
        rec->second.cleared = true;
        if (responsible_for(key.first) && cl_.contains(key.first)) pset_.push_back(*rec->second.own);
        ctx.trace("agree", 0, 0, "Clear");
        return;
      }
      case kSendTx:
        aggr_send_tx(ctx);
        ctx.schedule(config_.tx_period, {kSendTx, 0, 0});
        return;
      case kEndorseDeadline: {
        auto id = inflight_by_timer_.find(t.a);
        if (id == inflight_by_timer_.end()) return;
        auto it = inflight_.find(id->second);
        inflight_by_timer_.erase(id);
        if (it == inflight_.end()) return;
        // TxStalled: keep the readings for the next period under a fresh nonce
        auto& tx = it->second.tx;
        ctx.trace("send_tx", 0, 0, "TxStalled");
        ctx.log({{"event", "tx_stalled"}, {"aggregator", name_}, {"endorsements", tx.endorsements.size()},
                 {"tau", ledger_.config().policy.tau}});
        std::vector<Observation> back;
        for (auto& p : tx.payload) back.push_back({p.sensor_pk, std::move(p.message), std::move(p.signature)});
        pset_.insert(pset_.begin(), back.begin(), back.end());
        pending_transfers_.insert(pending_transfers_.begin(), tx.transfers.begin(), tx.transfers.end());
        inflight_.erase(it);
        return;
      }
      case kResubmit:
        for (auto& [nonce, sub] : txset_) {
          if (ctx.now() - sub.submitted_at >= config_.resubmit_timeout) {
            send_to_orderers(ctx, sub.tx);
            sub.submitted_at = ctx.now();
          }
        }
        ctx.schedule(config_.resubmit_timeout, {kResubmit, 0, 0});
        return;
      default: return;
    }
  }

  void on_commit(Context* ctx, const ledger::Block& b) {
    for (const auto& tx : b.transactions) {
      if (auto it = txset_.find(tx.nonce); it != txset_.end()) {
        if (ctx) {
          ctx->trace("commit", 0, 0, "ok");
          ctx->log({{"event", "tx_committed"}, {"aggregator", name_}, {"height", b.height},
                    {"latency", ctx->now() - it->second.submitted_at}, {"readings", tx.payload.size()}});
        }
        txset_.erase(it);
      }
      for (const auto& rec : tx.transfers) {
        if (rec.recipient == public_key()) install_transfer(ctx, rec);
      }
    }
    if (b.type == ledger::BlockType::Configuration && ctx)
      ctx->trace("config", 0, 0, "epoch " + std::to_string(ledger_.config().epoch));
  }

  std::string name_;
  crypto::SigningKey key_;
  ledger::Ledger ledger_;
  AggregatorConfig config_;
  std::vector<crypto::PublicKey> al_;
  std::map<HashDigest, SensorEntry> cl_;
  std::map<HashDigest, std::map<std::uint32_t, Partial>> partial_;
  std::map<RecordKey, AgreeRecord> records_;
  std::map<std::uint64_t, RecordKey> pending_clear_;
  std::vector<Observation> pset_;
  std::vector<ledger::TransferRecord> pending_transfers_;
  std::map<Bytes, InFlight> inflight_;
  std::map<std::uint64_t, Bytes> inflight_by_timer_;
  std::map<Bytes, Submitted> txset_;
  std::map<std::uint64_t, ledger::Block> future_;
  std::uint64_t next_timer_id_ = 1;
  std::uint64_t last_group_seq_ = 0;
};

}  // namespace bbox::devicegroup
