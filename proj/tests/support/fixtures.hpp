#pragma once

#include <string>
#include <vector>

#include "bbox/crypto.hpp"
#include "bbox/ledger.hpp"

namespace bbox::testing {

inline crypto::SigningKey key(const std::string& name) { return crypto::SigningKey::from_seed(as_bytes(name)); }

inline std::vector<crypto::SigningKey> keys(const std::string& prefix, std::size_t count) {
  std::vector<crypto::SigningKey> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(key(prefix + std::to_string(i)));
  return out;
}

inline std::vector<crypto::PublicKey> pubs(const std::vector<crypto::SigningKey>& ks) {
  std::vector<crypto::PublicKey> out;
  for (const auto& k : ks) out.push_back(k.public_key());
  return out;
}

inline Bytes nonce_of(std::uint64_t i) {
  auto d = sha256(as_bytes("nonce" + std::to_string(i)));
  return {d.bytes().begin(), d.bytes().end()};
}

// Transaction endorsed by `endorsers` (submitter signs first when it is among them).
inline ledger::Transaction make_tx(const crypto::SigningKey& submitter, const std::vector<crypto::SigningKey>& endorsers,
                                   std::uint64_t nonce, std::string reading = "r") {
  ledger::Transaction tx;
  ledger::SensorReading s;
  s.sensor_pk = sha256(as_bytes("sensor"));
  s.message = to_bytes(reading);
  s.signature.sigma1 = sha256(as_bytes("s1"));
  s.signature.sigma2 = sha256(as_bytes("s2"));
  tx.payload.push_back(s);
  tx.nonce = nonce_of(nonce);
  tx.submitter = submitter.public_key();
  for (const auto& e : endorsers) tx.endorsements.push_back({e.public_key(), tx.endorse(e)});
  return tx;
}

inline void sign_quorum(ledger::Block& b, const std::vector<crypto::SigningKey>& orderers, std::uint64_t view = 0) {
  b.quorum.view = view;
  b.quorum.votes.clear();
  auto msg = ledger::commit_message(view, b.height, b.hash());
  for (const auto& o : orderers) b.quorum.votes.push_back({o.public_key(), o.sign(msg)});
}

inline ledger::Block next_tx_block(const ledger::Ledger& l, std::vector<ledger::Transaction> txs,
                                   const std::vector<crypto::SigningKey>& orderers) {
  ledger::Block b;
  b.height = l.height();
  b.type = ledger::BlockType::Transaction;
  b.prev_hash = l.tip_hash();
  b.transactions = std::move(txs);
  sign_quorum(b, orderers);
  return b;
}

}  // namespace bbox::testing
