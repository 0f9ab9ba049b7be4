#pragma once

// Protocol messages exchanged between actors, and the actor/context interface the
// simulator drives. Actors never see wall-clock time or each other's memory;
// everything arrives through on_message().

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bbox/chainsig.hpp"
#include "bbox/crypto.hpp"
#include "bbox/ledger.hpp"
#include "bbox/membership.hpp"

namespace bbox::net {

using ActorId = std::uint32_t;
using Time = std::uint64_t;  // simulated milliseconds
using crypto::PublicKey;
using crypto::Signature;
using crypto::SigningKey;

inline constexpr std::uint8_t kConsensusWireVersion = 0x01;

enum class FrameType : std::uint8_t { Payload = 0, Hash = 1, SecretKey = 2 };

constexpr std::string_view to_string(FrameType t) {
  switch (t) {
    case FrameType::Payload: return "payload";
    case FrameType::Hash: return "hash";
    case FrameType::SecretKey: return "secretKey";
  }
  return "unknown";
}

struct BroadcastFrame {
  HashDigest sensor;
  std::uint32_t round = 0;  // per-round sequence number for reassembly
  FrameType type = FrameType::Payload;
  Bytes data;
};

// A verified sensor reading as seen by one aggregator.
struct Observation {
  HashDigest sensor;
  Bytes message;
  chainsig::ChainSignature signature;
};

struct AgreeAnnounce {
  std::string group;
  Observation observation;
  PublicKey sender;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.str("bbox/agree").str(group).blob(observation.sensor.bytes()).blob(observation.message);
    w.blob(observation.signature.encode()).raw(sender.bytes);
    return std::move(w).take();
  }
};

struct AgreeAlarm {
  std::string group;
  HashDigest sensor;
  HashDigest key;  // the sigma2 both conflicting messages claim
  Bytes first;
  Bytes second;
  PublicKey sender;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.str("bbox/alarm").str(group).blob(sensor.bytes()).blob(key.bytes()).blob(first).blob(second).raw(sender.bytes);
    return std::move(w).take();
  }
};

struct EndorseRequest {
  ledger::Transaction tx;
};

struct EndorseReply {
  Bytes nonce;
  std::optional<ledger::Endorsement> endorsement;  // absent when refused
};

struct TxSubmit {
  ledger::Transaction tx;
  std::uint64_t known_height = 0;  // submitter's ledger height, for catch-up
};

struct ConfigSubmit {
  ledger::ConfigUpdate update;
};

struct GroupPush {
  membership::GroupUpdate update;
};

// A local admin instructing the responsible aggregator to hand a sensor over
// to an aggregator of another group.
struct TransferOrder {
  std::string group;
  HashDigest sensor;
  PublicKey destination;
  PublicKey admin;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.str("bbox/transfer-order").str(group).blob(sensor.bytes()).raw(destination.bytes).raw(admin.bytes);
    return std::move(w).take();
  }
  void sign(const SigningKey& key) {
    admin = key.public_key();
    signature = key.sign(signing_bytes());
  }
  bool verify() const { return crypto::verify(admin, signing_bytes(), signature); }
};

inline Bytes prepare_message(std::uint64_t view, std::uint64_t height, const HashDigest& hash) {
  ByteWriter w;
  w.str("bbox/prepare").u64(view).u64(height).raw(hash.bytes());
  return std::move(w).take();
}

// Quorum of Prepare votes on one (view, height, block hash).
struct PrepareCert {
  std::uint64_t view = 0;
  std::uint64_t height = 0;
  HashDigest hash;
  std::vector<ledger::OrdererVote> votes;

  bool verify(const ledger::SystemConfig& config) const {
    auto msg = prepare_message(view, height, hash);
    std::set<PublicKey> signers;
    for (const auto& v : votes) {
      if (!config.is_orderer(v.orderer) || !signers.insert(v.orderer).second) return false;
      if (!crypto::verify(v.orderer, msg, v.signature)) return false;
    }
    return signers.size() >= config.quorum();
  }
};

enum class ConsensusKind : std::uint8_t { PrePrepare = 0, Prepare = 1, Commit = 2, ViewChange = 3, BlockDeliver = 4 };

constexpr std::string_view to_string(ConsensusKind k) {
  switch (k) {
    case ConsensusKind::PrePrepare: return "PrePrepare";
    case ConsensusKind::Prepare: return "Prepare";
    case ConsensusKind::Commit: return "Commit";
    case ConsensusKind::ViewChange: return "ViewChange";
    case ConsensusKind::BlockDeliver: return "BlockDeliver";
  }
  return "unknown";
}

// PrePrepare: block proposal (with the prepare certificate that justifies it
// after a view change). Prepare / Commit: votes on a block hash. ViewChange:
// the sender's highest prepare certificate and its block. BlockDeliver: a
// committed block with its quorum certificate.
struct ConsensusMsg {
  ConsensusKind kind = ConsensusKind::Prepare;
  std::uint64_t view = 0;
  std::uint64_t height = 0;
  HashDigest hash;
  std::optional<ledger::Block> block;
  std::optional<PrepareCert> justify;
  PublicKey sender;
  Signature signature;

  // Prepare and Commit sign the vote message itself so that votes can be
  // assembled into certificates.
  Bytes signing_bytes() const {
    if (kind == ConsensusKind::Prepare) return prepare_message(view, height, hash);
    if (kind == ConsensusKind::Commit) return ledger::commit_message(view, height, hash);
    ByteWriter w;
    w.str("bbox/consensus").u8(static_cast<std::uint8_t>(kind)).u64(view).u64(height).blob(hash.bytes());
    w.u8(block ? 1 : 0);
    if (block) w.raw(block->hash().bytes());
    w.u8(justify ? 1 : 0);
    if (justify) w.u64(justify->view).u64(justify->height).raw(justify->hash.bytes());
    w.raw(sender.bytes);
    return std::move(w).take();
  }

  void sign(const SigningKey& key) {
    sender = key.public_key();
    signature = key.sign(signing_bytes());
  }
  bool verify_signature() const { return crypto::verify(sender, signing_bytes(), signature); }

  Bytes encode() const {
    ByteWriter w;
    w.u8(kConsensusWireVersion).u8(static_cast<std::uint8_t>(kind)).u64(view).u64(height).blob(hash.bytes());
    w.u8(block ? 1 : 0);
    if (block) w.blob(block->encode());
    w.u8(justify ? 1 : 0);
    if (justify) {
      w.u64(justify->view).u64(justify->height).blob(justify->hash.bytes());
      w.u32(static_cast<std::uint32_t>(justify->votes.size()));
      for (const auto& v : justify->votes) w.raw(v.orderer.bytes).raw(v.signature.bytes);
    }
    w.raw(sender.bytes).raw(signature.bytes);
    return std::move(w).take();
  }

  static ConsensusMsg decode(ByteView data) {
    ByteReader r(data);
    if (r.u8() != kConsensusWireVersion) throw Error(ErrorCode::Decode, "unsupported consensus message version");
    ConsensusMsg m;
    auto kind = r.u8();
    if (kind > 4) throw Error(ErrorCode::Decode, "unknown consensus message kind");
    m.kind = static_cast<ConsensusKind>(kind);
    m.view = r.u64();
    m.height = r.u64();
    if (auto h = r.blob(); !h.empty()) m.hash = HashDigest::from_bytes(h);
    if (r.u8()) m.block = ledger::Block::decode(r.blob());
    if (r.u8()) {
      PrepareCert c;
      c.view = r.u64();
      c.height = r.u64();
      if (auto h = r.blob(); !h.empty()) c.hash = HashDigest::from_bytes(h);
      auto n = r.u32();
      if (n > r.remaining() / 96) throw Error(ErrorCode::Decode, "vote count out of range");
      for (std::uint32_t i = 0; i < n; ++i) {
        ledger::OrdererVote v;
        v.orderer = PublicKey::from_bytes(r.raw(32));
        v.signature = Signature::from_bytes(r.raw(64));
        c.votes.push_back(v);
      }
      m.justify = std::move(c);
    }
    m.sender = PublicKey::from_bytes(r.raw(32));
    m.signature = Signature::from_bytes(r.raw(64));
    r.expect_end();
    return m;
  }
};

// Actor-private timer; the meaning of the fields is up to the actor.
struct Timer {
  std::uint32_t kind = 0;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
};

using Message = std::variant<BroadcastFrame, AgreeAnnounce, AgreeAlarm, EndorseRequest, EndorseReply, TxSubmit,
                             ConfigSubmit, GroupPush, TransferOrder, ConsensusMsg, Timer>;

class Context {
 public:
  virtual ~Context() = default;

  virtual Time now() const = 0;
  virtual ActorId self() const = 0;
  virtual void send(ActorId to, Message msg) = 0;
  virtual void schedule(Time delay, Timer timer) = 0;
  virtual std::optional<ActorId> address_of(const PublicKey& pk) const = 0;
  // Aggregators currently within radio range of this sensor.
  virtual std::vector<ActorId> radio_neighbors() const = 0;
  virtual std::mt19937_64& rng() = 0;
  // One metrics row: (event_time, actor, op, hash_ops, walk_length, outcome).
  virtual void trace(std::string_view op, std::uint64_t hash_ops, std::uint64_t walk_length,
                     std::string_view outcome) = 0;
  virtual void log(nlohmann::json event) = 0;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual void on_start(Context&) {}
  virtual void on_message(Context& ctx, ActorId from, const Message& msg) = 0;
  // Honest replicas expose their ledger to the simulator's consistency checks.
  virtual const ledger::Ledger* replica() const { return nullptr; }
};

}  // namespace bbox::net
