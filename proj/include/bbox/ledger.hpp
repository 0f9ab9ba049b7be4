#pragma once

// Permissioned ledger: transaction blocks carrying endorsed sensor data, and
// configuration blocks carrying the whitelists and policy in force. The highest
// configuration block wins; only the MSP can produce one.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bbox/bytes.hpp"
#include "bbox/chainsig.hpp"
#include "bbox/crypto.hpp"
#include "bbox/error.hpp"
#include "bbox/hash.hpp"

namespace bbox::ledger {

using crypto::PublicKey;
using crypto::Signature;

inline constexpr std::uint8_t kBlockEncodingVersion = 0x01;
inline constexpr std::size_t kNonceBytes = 32;
// Block capacity reference point: Fabric's default 2 MB batch limit.
inline constexpr std::uint32_t kDefaultMaxBlockTxs = 500;

struct Policy {
  std::uint32_t tau = 1;
  std::uint64_t max_verifications = 10000;
  std::uint64_t delta = 100;  // simulated time units
  std::uint32_t max_block_txs = kDefaultMaxBlockTxs;

  friend bool operator==(const Policy&, const Policy&) = default;
};

struct ConsensusParams {
  std::string algorithm = "pbft-v1";
  std::uint64_t view_timeout = 1000;

  friend bool operator==(const ConsensusParams&, const ConsensusParams&) = default;
};

struct SystemConfig {
  PublicKey msp_pk;
  ConsensusParams consensus;
  std::uint64_t epoch = 0;
  std::vector<PublicKey> orderers;      // OL
  std::vector<PublicKey> local_admins;  // LL
  std::vector<PublicKey> aggregators;   // PL
  Policy policy;

  static bool contains(const std::vector<PublicKey>& list, const PublicKey& pk) {
    return std::find(list.begin(), list.end(), pk) != list.end();
  }
  bool is_orderer(const PublicKey& pk) const { return contains(orderers, pk); }
  bool is_local_admin(const PublicKey& pk) const { return contains(local_admins, pk); }
  bool is_aggregator(const PublicKey& pk) const { return contains(aggregators, pk); }

  // Byzantine bound and vote quorum for the current orderer set. For |OL| = 3f+1
  // the quorum is 2f+1; other sizes use |OL| - f so that two quorums always share
  // an honest orderer.
  std::size_t max_faulty() const { return orderers.empty() ? 0 : (orderers.size() - 1) / 3; }
  std::size_t quorum() const { return orderers.size() - max_faulty(); }

  void validate() const {
    auto unique = [](const std::vector<PublicKey>& list, const char* name) {
      std::set<PublicKey> seen(list.begin(), list.end());
      if (seen.size() != list.size()) throw Error(ErrorCode::Config, std::string(name) + " contains duplicates");
    };
    unique(orderers, "OL");
    unique(local_admins, "LL");
    unique(aggregators, "PL");
    if (policy.tau < 1) throw Error(ErrorCode::Config, "tau must be at least 1");
    if (!aggregators.empty() && policy.tau > aggregators.size())
      throw Error(ErrorCode::Config, "tau exceeds the number of aggregators");
    if (policy.max_verifications < 1) throw Error(ErrorCode::Config, "max_verifications must be positive");
    if (policy.max_block_txs < 1) throw Error(ErrorCode::Config, "max_block_txs must be positive");
    if (consensus.algorithm.empty()) throw Error(ErrorCode::Config, "consensus algorithm id missing");
  }

  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

struct SensorReading {
  HashDigest sensor_pk;
  Bytes message;
  chainsig::ChainSignature signature;

  friend bool operator==(const SensorReading&, const SensorReading&) = default;
};

// A verifier state sealed to the receiving aggregator (sensor transfer).
struct TransferRecord {
  HashDigest sensor_pk;
  PublicKey recipient;
  Bytes sealed_state;

  friend bool operator==(const TransferRecord&, const TransferRecord&) = default;
};

struct Endorsement {
  PublicKey endorser;
  Signature signature;

  friend bool operator==(const Endorsement&, const Endorsement&) = default;
};

namespace detail {

inline void put_digest(ByteWriter& w, const HashDigest& d) { w.blob(d.bytes()); }
inline HashDigest get_digest(ByteReader& r) {
  auto b = r.blob();
  if (b.empty()) return {};
  return HashDigest::from_bytes(b);
}
inline void put_pk(ByteWriter& w, const PublicKey& pk) { w.raw(pk.bytes); }
inline PublicKey get_pk(ByteReader& r) { return PublicKey::from_bytes(r.raw(32)); }
inline void put_sig(ByteWriter& w, const Signature& s) { w.raw(s.bytes); }
inline Signature get_sig(ByteReader& r) { return Signature::from_bytes(r.raw(64)); }

inline void put_keys(ByteWriter& w, const std::vector<PublicKey>& keys) {
  w.u32(static_cast<std::uint32_t>(keys.size()));
  for (const auto& k : keys) put_pk(w, k);
}
inline std::vector<PublicKey> get_keys(ByteReader& r) {
  auto n = r.u32();
  if (n > r.remaining() / 32) throw Error(ErrorCode::Decode, "key list length out of range");
  std::vector<PublicKey> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(get_pk(r));
  return out;
}

template <class T, class Fn>
std::vector<T> get_list(ByteReader& r, Fn&& read_one) {
  auto n = r.u32();
  if (n > r.remaining()) throw Error(ErrorCode::Decode, "list length out of range");
  std::vector<T> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(read_one(r));
  return out;
}

}  // namespace detail

inline void encode(ByteWriter& w, const SystemConfig& c) {
  detail::put_pk(w, c.msp_pk);
  w.str(c.consensus.algorithm).u64(c.consensus.view_timeout).u64(c.epoch);
  detail::put_keys(w, c.orderers);
  detail::put_keys(w, c.local_admins);
  detail::put_keys(w, c.aggregators);
  w.u32(c.policy.tau).u64(c.policy.max_verifications).u64(c.policy.delta).u32(c.policy.max_block_txs);
}

inline SystemConfig decode_config(ByteReader& r) {
  SystemConfig c;
  c.msp_pk = detail::get_pk(r);
  c.consensus.algorithm = r.str();
  c.consensus.view_timeout = r.u64();
  c.epoch = r.u64();
  c.orderers = detail::get_keys(r);
  c.local_admins = detail::get_keys(r);
  c.aggregators = detail::get_keys(r);
  c.policy.tau = r.u32();
  c.policy.max_verifications = r.u64();
  c.policy.delta = r.u64();
  c.policy.max_block_txs = r.u32();
  return c;
}

struct Transaction {
  std::vector<SensorReading> payload;
  std::vector<TransferRecord> transfers;
  Bytes nonce;
  PublicKey submitter;
  std::vector<Endorsement> endorsements;

  // Everything an endorser signs: payload || transfers || nonce || submitter.
  Bytes signing_bytes() const {
    ByteWriter w;
    w.str("bbox/tx/v1");
    w.u32(static_cast<std::uint32_t>(payload.size()));
    for (const auto& p : payload) {
      detail::put_digest(w, p.sensor_pk);
      w.blob(p.message).blob(p.signature.encode());
    }
    w.u32(static_cast<std::uint32_t>(transfers.size()));
    for (const auto& t : transfers) {
      detail::put_digest(w, t.sensor_pk);
      detail::put_pk(w, t.recipient);
      w.blob(t.sealed_state);
    }
    w.blob(nonce);
    detail::put_pk(w, submitter);
    return std::move(w).take();
  }

  Signature endorse(const crypto::SigningKey& key) const { return key.sign(signing_bytes()); }

  void encode(ByteWriter& w) const {
    w.blob(signing_bytes());
    w.u32(static_cast<std::uint32_t>(endorsements.size()));
    for (const auto& e : endorsements) {
      detail::put_pk(w, e.endorser);
      detail::put_sig(w, e.signature);
    }
  }

  static Transaction decode(ByteReader& outer) {
    Transaction tx;
    auto body = outer.blob();
    ByteReader r(body);
    if (r.str() != "bbox/tx/v1") throw Error(ErrorCode::Decode, "bad transaction tag");
    tx.payload = detail::get_list<SensorReading>(r, [](ByteReader& in) {
      SensorReading s;
      s.sensor_pk = detail::get_digest(in);
      s.message = in.blob();
      s.signature = chainsig::ChainSignature::decode(in.blob());
      return s;
    });
    tx.transfers = detail::get_list<TransferRecord>(r, [](ByteReader& in) {
      TransferRecord t;
      t.sensor_pk = detail::get_digest(in);
      t.recipient = detail::get_pk(in);
      t.sealed_state = in.blob();
      return t;
    });
    tx.nonce = r.blob();
    tx.submitter = detail::get_pk(r);
    r.expect_end();
    tx.endorsements = detail::get_list<Endorsement>(outer, [](ByteReader& in) {
      Endorsement e;
      e.endorser = detail::get_pk(in);
      e.signature = detail::get_sig(in);
      return e;
    });
    return tx;
  }

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

// MSP-signed configuration transaction [LL, OL, PL, Pol]; not subject to tau.
struct ConfigUpdate {
  SystemConfig config;
  std::optional<Signature> msp_signature;  // absent only in the genesis block

  Bytes signing_bytes() const {
    ByteWriter w;
    w.str("bbox/config/v1");
    bbox::ledger::encode(w, config);
    return std::move(w).take();
  }

  static ConfigUpdate sign(SystemConfig config, const crypto::SigningKey& msp) {
    ConfigUpdate u{std::move(config), std::nullopt};
    u.msp_signature = msp.sign(u.signing_bytes());
    return u;
  }

  bool verify(const PublicKey& msp_pk) const {
    return msp_signature && crypto::verify(msp_pk, signing_bytes(), *msp_signature);
  }

  friend bool operator==(const ConfigUpdate&, const ConfigUpdate&) = default;
};

struct OrdererVote {
  PublicKey orderer;
  Signature signature;

  friend bool operator==(const OrdererVote&, const OrdererVote&) = default;
};

// Commit votes of one consensus view over (view, height, block hash, 1).
struct QuorumCert {
  std::uint64_t view = 0;
  std::vector<OrdererVote> votes;

  friend bool operator==(const QuorumCert&, const QuorumCert&) = default;
};

inline Bytes commit_message(std::uint64_t view, std::uint64_t height, const HashDigest& block_hash) {
  ByteWriter w;
  w.str("bbox/commit").u64(view).u64(height).raw(block_hash.bytes()).u8(1);
  return std::move(w).take();
}

enum class BlockType : std::uint8_t { Transaction = 0, Configuration = 1 };

constexpr std::string_view to_string(BlockType t) {
  return t == BlockType::Transaction ? "transaction" : "configuration";
}

struct Block {
  std::uint64_t height = 0;
  BlockType type = BlockType::Transaction;
  HashDigest prev_hash;
  std::vector<Transaction> transactions;
  std::optional<ConfigUpdate> config;
  QuorumCert quorum;

  // Canonical content: everything except the orderer quorum.
  Bytes content_bytes() const {
    ByteWriter w;
    w.str("bbox/block/v1").u64(height).u8(static_cast<std::uint8_t>(type));
    detail::put_digest(w, prev_hash);
    w.u32(static_cast<std::uint32_t>(transactions.size()));
    for (const auto& tx : transactions) tx.encode(w);
    w.u8(config ? 1 : 0);
    if (config) {
      w.blob(config->signing_bytes());
      w.u8(config->msp_signature ? 1 : 0);
      if (config->msp_signature) detail::put_sig(w, *config->msp_signature);
    }
    return std::move(w).take();
  }

  HashDigest hash() const { return sha256(content_bytes()); }

  Bytes encode() const {
    ByteWriter w;
    w.u8(kBlockEncodingVersion).blob(content_bytes());
    w.u64(quorum.view).u32(static_cast<std::uint32_t>(quorum.votes.size()));
    for (const auto& v : quorum.votes) {
      detail::put_pk(w, v.orderer);
      detail::put_sig(w, v.signature);
    }
    return std::move(w).take();
  }

  static Block decode(ByteView data) {
    ByteReader outer(data);
    if (outer.u8() != kBlockEncodingVersion) throw Error(ErrorCode::Decode, "unsupported block version");
    auto content = outer.blob();
    Block b;
    ByteReader r(content);
    if (r.str() != "bbox/block/v1") throw Error(ErrorCode::Decode, "bad block tag");
    b.height = r.u64();
    auto type = r.u8();
    if (type > 1) throw Error(ErrorCode::Decode, "unknown block type");
    b.type = static_cast<BlockType>(type);
    b.prev_hash = detail::get_digest(r);
    b.transactions = detail::get_list<Transaction>(r, [](ByteReader& in) { return Transaction::decode(in); });
    if (r.u8()) {
      ConfigUpdate u;
      auto signed_part = r.blob();
      ByteReader cr(signed_part);
      if (cr.str() != "bbox/config/v1") throw Error(ErrorCode::Decode, "bad config tag");
      u.config = decode_config(cr);
      cr.expect_end();
      if (r.u8()) u.msp_signature = detail::get_sig(r);
      b.config = std::move(u);
    }
    r.expect_end();
    b.quorum.view = outer.u64();
    b.quorum.votes = detail::get_list<OrdererVote>(outer, [](ByteReader& in) {
      OrdererVote v;
      v.orderer = detail::get_pk(in);
      v.signature = detail::get_sig(in);
      return v;
    });
    outer.expect_end();
    return b;
  }

  friend bool operator==(const Block&, const Block&) = default;
};

enum class BlockFault {
  None,
  BadHeight,
  BadPrevHash,
  BadType,
  EmptyBody,
  CapacityExceeded,
  NoOrderers,
  BadQuorum,
  UnauthorizedSubmitter,
  InsufficientEndorsements,
  BadEndorsement,
  DuplicateNonce,
  BadNonce,
  BadConfigSignature,
  StaleConfigEpoch,
  InvalidConfig,
};

constexpr std::string_view to_string(BlockFault f) {
  switch (f) {
    case BlockFault::None: return "ok";
    case BlockFault::BadHeight: return "BadHeight";
    case BlockFault::BadPrevHash: return "BadPrevHash";
    case BlockFault::BadType: return "BadType";
    case BlockFault::EmptyBody: return "EmptyBody";
    case BlockFault::CapacityExceeded: return "CapacityExceeded";
    case BlockFault::NoOrderers: return "NoOrderers";
    case BlockFault::BadQuorum: return "BadQuorum";
    case BlockFault::UnauthorizedSubmitter: return "UnauthorizedSubmitter";
    case BlockFault::InsufficientEndorsements: return "InsufficientEndorsements";
    case BlockFault::BadEndorsement: return "BadEndorsement";
    case BlockFault::DuplicateNonce: return "DuplicateNonce";
    case BlockFault::BadNonce: return "BadNonce";
    case BlockFault::BadConfigSignature: return "BadConfigSignature";
    case BlockFault::StaleConfigEpoch: return "StaleConfigEpoch";
    case BlockFault::InvalidConfig: return "InvalidConfig";
  }
  return "unknown";
}

struct BlockCheck {
  BlockFault fault = BlockFault::None;
  std::size_t transaction = 0;  // offending transaction index, when relevant

  explicit operator bool() const { return fault == BlockFault::None; }
};

// Per-transaction admission rule shared by orderers and block validation: the
// submitter and every endorser are on PL, endorsers are distinct, every
// signature verifies, and at least tau endorsements are present (the
// submitter's own endorsement counts).
inline BlockFault check_transaction(const SystemConfig& config, const Transaction& tx) {
  if (tx.nonce.size() != kNonceBytes) return BlockFault::BadNonce;
  if (!config.is_aggregator(tx.submitter)) return BlockFault::UnauthorizedSubmitter;
  auto bytes = tx.signing_bytes();
  std::set<PublicKey> endorsers;
  for (const auto& e : tx.endorsements) {
    if (!config.is_aggregator(e.endorser) || !endorsers.insert(e.endorser).second) return BlockFault::BadEndorsement;
    if (!crypto::verify(e.endorser, bytes, e.signature)) return BlockFault::BadEndorsement;
  }
  if (endorsers.size() < config.policy.tau) return BlockFault::InsufficientEndorsements;
  return BlockFault::None;
}

inline BlockFault check_quorum(const SystemConfig& config, const Block& block) {
  if (config.orderers.empty()) return BlockFault::NoOrderers;
  auto hash = block.hash();
  auto msg = commit_message(block.quorum.view, block.height, hash);
  std::set<PublicKey> signers;
  for (const auto& v : block.quorum.votes) {
    if (!config.is_orderer(v.orderer) || !signers.insert(v.orderer).second) return BlockFault::BadQuorum;
    if (!crypto::verify(v.orderer, msg, v.signature)) return BlockFault::BadQuorum;
  }
  if (signers.size() < config.quorum()) return BlockFault::BadQuorum;
  return BlockFault::None;
}

// Append-only chain with the configuration in force and the committed nonce set cached.
class Ledger {
 public:
  Ledger() = default;

  explicit Ledger(Block genesis) {
    if (genesis.height != 0 || genesis.type != BlockType::Configuration || !genesis.config ||
        genesis.prev_hash != HashDigest::zero(32) || !genesis.transactions.empty())
      throw Error(ErrorCode::Config, "malformed genesis block");
    genesis.config->config.validate();
    tip_hash_ = genesis.hash();
    blocks_.push_back(std::move(genesis));
    config_height_ = 0;
  }

  static Ledger from_blocks(std::span<const Block> blocks) {
    if (blocks.empty()) throw Error(ErrorCode::Config, "chain is empty");
    Ledger l(blocks.front());
    for (std::size_t i = 1; i < blocks.size(); ++i) {
      auto c = l.check(blocks[i]);
      if (!c) throw Error(ErrorCode::Config, "block " + std::to_string(i) + " invalid: " + std::string(to_string(c.fault)));
      l.append_unchecked(blocks[i]);
    }
    return l;
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  std::uint64_t height() const { return blocks_.size(); }  // next height to fill
  const Block& tip() const { return blocks_.back(); }
  const HashDigest& tip_hash() const { return tip_hash_; }
  const SystemConfig& config() const { return blocks_[config_height_].config->config; }
  std::uint64_t config_height() const { return config_height_; }
  bool has_nonce(const Bytes& nonce) const { return nonces_.contains(nonce); }

  // Without require_quorum this is the proposal check orderers run before voting.
  BlockCheck check(const Block& block, bool require_quorum = true) const {
    if (blocks_.empty()) return {BlockFault::BadHeight};
    if (block.height != height()) return {BlockFault::BadHeight};
    if (block.prev_hash != tip_hash_) return {BlockFault::BadPrevHash};
    const auto& cfg = config();

    if (block.type == BlockType::Configuration) {
      if (!block.config || !block.transactions.empty()) return {BlockFault::BadType};
      if (!block.config->verify(cfg.msp_pk)) return {BlockFault::BadConfigSignature};
      if (block.config->config.epoch <= cfg.epoch) return {BlockFault::StaleConfigEpoch};
      if (block.config->config.msp_pk != cfg.msp_pk) return {BlockFault::InvalidConfig};
      try {
        block.config->config.validate();
      } catch (const Error&) {
        return {BlockFault::InvalidConfig};
      }
      // bootstrapping: before any orderer is registered the MSP signature suffices
      if (require_quorum && !cfg.orderers.empty()) {
        if (auto q = check_quorum(cfg, block); q != BlockFault::None) return {q};
      }
      return {};
    }

    if (block.config) return {BlockFault::BadType};
    if (block.transactions.empty()) return {BlockFault::EmptyBody};
    if (block.transactions.size() > cfg.policy.max_block_txs) return {BlockFault::CapacityExceeded};
    if (require_quorum) {
      if (auto q = check_quorum(cfg, block); q != BlockFault::None) return {q};
    }
    std::set<Bytes> seen;
    for (std::size_t i = 0; i < block.transactions.size(); ++i) {
      const auto& tx = block.transactions[i];
      if (has_nonce(tx.nonce) || !seen.insert(tx.nonce).second) return {BlockFault::DuplicateNonce, i};
      if (auto f = check_transaction(cfg, tx); f != BlockFault::None) return {f, i};
    }
    return {};
  }

  void append(Block block) {
    auto c = check(block);
    if (!c) throw Error(ErrorCode::Config, "block rejected: " + std::string(to_string(c.fault)));
    append_unchecked(std::move(block));
  }

  // Appends without validation; callers must have run check() first.
  void append_unchecked(Block block) {
    for (const auto& tx : block.transactions) nonces_.insert(tx.nonce);
    tip_hash_ = block.hash();
    blocks_.push_back(std::move(block));
    if (blocks_.back().type == BlockType::Configuration) config_height_ = blocks_.size() - 1;
  }

  // Chains are hash-linked, so matching hashes at the shorter tip is enough.
  bool prefix_consistent(const Ledger& other) const {
    auto common = std::min(height(), other.height());
    if (common == 0) return true;
    return blocks_[common - 1].hash() == other.blocks_[common - 1].hash();
  }

 private:
  std::vector<Block> blocks_;
  HashDigest tip_hash_;
  std::uint64_t config_height_ = 0;
  std::set<Bytes> nonces_;
};

inline Block make_genesis(const PublicKey& msp_pk, SystemConfig config, const ConsensusParams& params = {}) {
  config.msp_pk = msp_pk;
  config.consensus = params;
  config.validate();
  Block b;
  b.height = 0;
  b.type = BlockType::Configuration;
  b.prev_hash = HashDigest::zero(32);
  b.config = ConfigUpdate{std::move(config), std::nullopt};
  return b;
}

inline SystemConfig read_config(std::span<const Block> chain) {
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    if (it->type == BlockType::Configuration && it->config) return it->config->config;
  }
  throw Error(ErrorCode::Config, "chain has no configuration block");
}

// Builds the next configuration block from an MSP-signed update. The orderer
// quorum, if any orderers are registered, is attached by consensus afterwards.
inline Block apply_config_update(std::span<const Block> chain, const ConfigUpdate& update) {
  if (chain.empty()) throw Error(ErrorCode::Config, "chain is empty");
  const auto& current = read_config(chain);
  if (!update.verify(current.msp_pk)) throw Error(ErrorCode::Auth, "configuration update not signed by the MSP");
  if (update.config.msp_pk != current.msp_pk) throw Error(ErrorCode::Config, "MSP key cannot change");
  if (update.config.epoch <= current.epoch) throw Error(ErrorCode::Config, "configuration epoch must increase");
  update.config.validate();
  Block b;
  b.height = chain.size();
  b.type = BlockType::Configuration;
  b.prev_hash = chain.back().hash();
  b.config = update;
  return b;
}

inline BlockCheck validate_block(std::span<const Block> chain, const Block& block) {
  try {
    auto ledger = Ledger::from_blocks(chain);
    return ledger.check(block);
  } catch (const Error&) {
    return {BlockFault::BadPrevHash};
  }
}

// Index of the first block that fails validation against its predecessors, if any.
inline std::optional<std::size_t> first_invalid_block(std::span<const Block> chain) {
  if (chain.empty()) return std::nullopt;
  Ledger l;
  try {
    l = Ledger(chain.front());
  } catch (const Error&) {
    return 0;
  }
  for (std::size_t i = 1; i < chain.size(); ++i) {
    if (!l.check(chain[i])) return i;
    l.append_unchecked(chain[i]);
  }
  return std::nullopt;
}

// One length-prefixed record per block, append-only.
inline void append_block_record(std::ostream& out, const Block& block) {
  auto bytes = block.encode();
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(bytes.size()));
  out.write(reinterpret_cast<const char*>(w.bytes().data()), 4);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void write_chain_file(const std::string& path, std::span<const Block> chain) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Config, "cannot open " + path);
  for (const auto& b : chain) append_block_record(out, b);
}

inline std::vector<Block> read_chain_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Config, "cannot open " + path);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(data);
  std::vector<Block> out;
  while (!r.done()) {
    auto len = r.u32();
    out.push_back(Block::decode(r.raw(len)));
  }
  return out;
}

}  // namespace bbox::ledger
