#pragma once

// Chain-based one-time signatures for broadcast-only sensors.
//
// Signing the i-th message reveals k_i and binds the message to k_{i-1}:
//   sigma = h(len(m) || m || k_{i-1}) || k_i
// A verifier keeps only its most recent accepted key (the anchor) and walks a
// received k_i back towards it, bounded by max_verifications hash steps. Lost
// broadcasts therefore cost one extra hash each and need no resynchronization.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "bbox/bytes.hpp"
#include "bbox/error.hpp"
#include "bbox/hash.hpp"
#include "bbox/traversal.hpp"

namespace bbox::chainsig {

inline constexpr std::uint8_t kSignatureWireVersion = 0x01;
inline constexpr std::uint8_t kStateFileVersion = 0x01;
inline constexpr std::array<std::uint8_t, 4> kStateMagic = {'B', 'B', 'C', 'S'};

enum class WireMode : std::uint8_t { Full = 0x00, Compressed = 0x01 };

struct ChainSignature {
  HashDigest sigma1;  // empty in compressed form
  HashDigest sigma2;
  std::uint32_t index_hint = 0;  // diagnostics only, never trusted

  bool compressed() const { return sigma1.empty(); }

  ChainSignature compress() const { return {HashDigest{}, sigma2, index_hint}; }

  // [version][mode][index_hint:4][sigma1, full mode only][sigma2]
  Bytes encode() const {
    ByteWriter w;
    w.u8(kSignatureWireVersion)
        .u8(static_cast<std::uint8_t>(compressed() ? WireMode::Compressed : WireMode::Full))
        .u32(index_hint);
    if (!compressed()) w.raw(sigma1.bytes());
    w.raw(sigma2.bytes());
    return std::move(w).take();
  }

  static ChainSignature decode(ByteView data) {
    ByteReader r(data);
    if (r.u8() != kSignatureWireVersion) throw Error(ErrorCode::Decode, "unsupported signature version");
    auto mode = r.u8();
    if (mode > 1) throw Error(ErrorCode::Decode, "unknown signature mode");
    ChainSignature sig;
    sig.index_hint = r.u32();
    std::size_t rest = r.remaining();
    if (mode == static_cast<std::uint8_t>(WireMode::Full)) {
      if (rest % 2 != 0) throw Error(ErrorCode::Decode, "full signature must carry two equal digests");
      auto len = rest / 2;
      if (len != 8 && len != 16 && len != 32) throw Error(ErrorCode::Decode, "bad digest length");
      sig.sigma1 = HashDigest::from_bytes(r.raw(len));
      sig.sigma2 = HashDigest::from_bytes(r.raw(len));
    } else {
      if (rest != 8 && rest != 16 && rest != 32) throw Error(ErrorCode::Decode, "bad digest length");
      sig.sigma2 = HashDigest::from_bytes(r.raw(rest));
    }
    return sig;
  }

  friend bool operator==(const ChainSignature&, const ChainSignature&) = default;
};

// sigma1 = h(len(m) as 8-byte big-endian || m || previous key)
inline HashDigest bind_message(const ChainHash& h, ByteView message, const HashDigest& previous_key) {
  ByteWriter len;
  len.u64(message.size());
  return h({len.bytes(), message, previous_key.bytes()});
}

struct SignStats {
  std::uint64_t derivation_hashes = 0;
  std::uint64_t binding_hashes = 0;
};

class ChainKeyState {
 public:
  ChainKeyState() = default;

  std::uint64_t length() const { return traversal_.length(); }
  std::uint64_t counter() const { return traversal_.released(); }
  std::uint64_t remaining() const { return length() - counter(); }
  bool exhausted() const { return counter() >= length(); }
  unsigned lambda() const { return lambda_; }
  const HashDigest& public_key() const { return pk_; }
  // k_ctr: the key the next signature binds to (pk before the first signature).
  const HashDigest& current_key() const { return current_; }

  // Stored chain elements: the current key first, then the traversal pebbles.
  std::vector<Pebble> pebbles() const {
    std::vector<Pebble> out{{counter(), current_}};
    auto rest = traversal_.pebbles();
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
  }

 private:
  friend struct StateAccess;

  unsigned lambda_ = 256;
  HashDigest pk_;
  HashDigest current_;
  FractalTraversal traversal_;
};

struct StateAccess {
  static ChainKeyState make(unsigned lambda, HashDigest pk, HashDigest current, FractalTraversal t) {
    ChainKeyState s;
    s.lambda_ = lambda;
    s.pk_ = pk;
    s.current_ = current;
    s.traversal_ = std::move(t);
    return s;
  }
  static FractalTraversal& traversal(ChainKeyState& s) { return s.traversal_; }
  static HashDigest& current(ChainKeyState& s) { return s.current_; }
};

struct KeyPair {
  HashDigest public_key;
  ChainKeyState state;
};

// The seed is k_n itself and must be exactly lambda/8 bytes; it is not retained.
inline KeyPair ot_keygen(std::uint64_t n, ByteView seed, unsigned lambda = 256, HashCounter* counter = nullptr) {
  if (n == 0) throw Error(ErrorCode::InvalidParameter, "chain length must be at least 1");
  ChainHash h(lambda, counter);
  if (seed.size() != h.digest_bytes())
    throw Error(ErrorCode::InvalidParameter, "seed must be lambda/8 bytes");
  HashDigest pk;
  auto traversal = FractalTraversal::build(HashDigest::from_bytes(seed), n, h, pk);
  return {pk, StateAccess::make(lambda, pk, pk, std::move(traversal))};
}

template <std::uniform_random_bit_generator Rng>
KeyPair ot_keygen(std::uint64_t n, Rng& rng, unsigned lambda = 256) {
  Bytes seed(lambda / 8);
  for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
  return ot_keygen(n, seed, lambda);
}

inline ChainSignature ot_sign(ChainKeyState& state, ByteView message, SignStats* stats = nullptr) {
  if (state.exhausted()) throw Error(ErrorCode::ChainExhausted, "no keys left; sensor must rejoin");
  HashCounter derive, binding;
  ChainHash derive_h(state.lambda(), &derive);
  ChainHash bind_h(state.lambda(), &binding);

  auto& previous = StateAccess::current(state);
  ChainSignature sig;
  sig.sigma1 = bind_message(bind_h, message, previous);
  sig.sigma2 = StateAccess::traversal(state).next(derive_h);
  sig.index_hint = static_cast<std::uint32_t>(state.counter());
  previous = sig.sigma2;
  if (stats) *stats = {derive.calls, binding.calls};
  return sig;
}

struct VerifierState {
  HashDigest anchor;
  std::uint64_t max_verifications = 10000;

  friend bool operator==(const VerifierState&, const VerifierState&) = default;
};

enum class Rejection { None, AnchorNotReached, BindingMismatch, Malformed };

constexpr std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::None: return "accepted";
    case Rejection::AnchorNotReached: return "AnchorNotReached";
    case Rejection::BindingMismatch: return "BindingMismatch";
    case Rejection::Malformed: return "Malformed";
  }
  return "unknown";
}

struct VerifyOutcome {
  bool accepted = false;
  Rejection reason = Rejection::Malformed;
  std::uint64_t walk_length = 0;  // hashes from sigma2 to the anchor; 1 + lost rounds
  std::uint64_t walk_hashes = 0;
  std::uint64_t binding_hashes = 0;
  VerifierState next;  // anchor advanced on accept, unchanged on reject

  std::uint64_t hash_ops() const { return walk_hashes + binding_hashes; }
};

// Pure: the outcome depends only on (state, message, signature).
// A compressed signature carries no sigma1; it is recomputed from h(sigma2), so
// acceptance reduces to reaching the anchor.
inline VerifyOutcome ot_verify(const VerifierState& state, ByteView message, const ChainSignature& sig) {
  VerifyOutcome out;
  out.next = state;
  auto bytes = state.anchor.size();
  if (bytes == 0 || sig.sigma2.size() != bytes || (!sig.compressed() && sig.sigma1.size() != bytes)) return out;
  ChainHash h(static_cast<unsigned>(bytes * 8));

  HashDigest walk = sig.sigma2;
  HashDigest previous;
  for (std::uint64_t j = 1; j <= state.max_verifications; ++j) {
    walk = h(walk);
    ++out.walk_hashes;
    if (j == 1) previous = walk;
    if (walk == state.anchor) {
      out.walk_length = j;
      break;
    }
  }
  if (out.walk_length == 0) {
    out.reason = Rejection::AnchorNotReached;
    return out;
  }
  auto expected = bind_message(h, message, previous);
  ++out.binding_hashes;
  if (!sig.compressed() && expected != sig.sigma1) {
    out.reason = Rejection::BindingMismatch;
    return out;
  }
  out.accepted = true;
  out.reason = Rejection::None;
  out.next.anchor = sig.sigma2;
  return out;
}

// Rebuilds the full signature for a compressed one (after verification).
inline ChainSignature expand(const ChainSignature& compressed, ByteView message) {
  if (!compressed.compressed()) return compressed;
  ChainHash h(static_cast<unsigned>(compressed.sigma2.size() * 8));
  return {bind_message(h, message, h(compressed.sigma2)), compressed.sigma2, compressed.index_hint};
}

// File layout: "BBCS" [version][lambda/32][n:8][ctr:8][count:2] then (position:8, digest) pairs.
inline Bytes serialize_signer_state(const ChainKeyState& state) {
  ByteWriter w;
  w.raw(kStateMagic).u8(kStateFileVersion).u8(static_cast<std::uint8_t>(state.lambda() / 32));
  w.u64(state.length()).u64(state.counter());
  auto pebbles = state.pebbles();
  w.u16(static_cast<std::uint16_t>(pebbles.size()));
  for (const auto& p : pebbles) w.u64(p.position).raw(p.value.bytes());
  return std::move(w).take();
}

// Recovers pk by hashing the current key ctr times.
inline ChainKeyState deserialize_signer_state(ByteView data) {
  ByteReader r(data);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kStateMagic.begin())) throw Error(ErrorCode::Decode, "bad magic");
  if (r.u8() != kStateFileVersion) throw Error(ErrorCode::Decode, "unsupported state version");
  unsigned lambda = r.u8() * 32u;
  if (!supported_lambda(lambda)) throw Error(ErrorCode::Decode, "unsupported lambda");
  auto n = r.u64();
  auto ctr = r.u64();
  auto count = r.u16();
  if (count == 0) throw Error(ErrorCode::Decode, "missing current key");
  std::vector<Pebble> pebbles;
  pebbles.reserve(count);
  for (unsigned i = 0; i < count; ++i) {
    Pebble p;
    p.position = r.u64();
    p.value = HashDigest::from_bytes(r.raw(lambda / 8));
    pebbles.push_back(p);
  }
  r.expect_end();
  if (pebbles.front().position != ctr) throw Error(ErrorCode::Decode, "current key position mismatch");
  auto traversal = FractalTraversal::restore(n, ctr, std::span(pebbles).subspan(1));
  ChainHash h(lambda);
  auto pk = h.iterate(pebbles.front().value, ctr);
  return StateAccess::make(lambda, pk, pebbles.front().value, std::move(traversal));
}

}  // namespace bbox::chainsig
