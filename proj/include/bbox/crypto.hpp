#pragma once

// EU-CMA signatures and public-key sealing used by every non-sensor participant.
// Ed25519 and X25519 sealed boxes via libsodium; everything above this header only
// sees PublicKey / Signature / SigningKey.

#include <sodium.h>

#include <array>
#include <compare>
#include <optional>
#include <set>
#include <string>

#include "bbox/bytes.hpp"
#include "bbox/hash.hpp"

namespace bbox::crypto {

struct PublicKey {
  std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES> bytes{};

  std::string hex() const { return to_hex(bytes); }
  std::string short_hex() const { return hex().substr(0, 12); }
  static PublicKey from_bytes(ByteView data) {
    if (data.size() != crypto_sign_PUBLICKEYBYTES) throw Error(ErrorCode::Decode, "public key must be 32 bytes");
    PublicKey pk;
    std::copy(data.begin(), data.end(), pk.bytes.begin());
    return pk;
  }

  friend auto operator<=>(const PublicKey&, const PublicKey&) = default;
};

struct Signature {
  std::array<std::uint8_t, crypto_sign_BYTES> bytes{};

  static Signature from_bytes(ByteView data) {
    if (data.size() != crypto_sign_BYTES) throw Error(ErrorCode::Decode, "signature must be 64 bytes");
    Signature s;
    std::copy(data.begin(), data.end(), s.bytes.begin());
    return s;
  }

  friend auto operator<=>(const Signature&, const Signature&) = default;
};

class SigningKey {
 public:
  // Deterministic key derivation so that simulations are replayable from a seed.
  static SigningKey from_seed(ByteView seed) {
    ensure_sodium();
    auto material = sha256(seed);
    SigningKey key;
    crypto_sign_seed_keypair(key.pk_.bytes.data(), key.sk_.data(), material.bytes().data());
    return key;
  }

  template <class Rng>
  static SigningKey generate(Rng& rng) {
    std::array<std::uint8_t, 32> seed{};
    for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
    return from_seed(seed);
  }

  const PublicKey& public_key() const { return pk_; }

  Signature sign(ByteView message) const {
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), sk_.data());
    return sig;
  }

  // X25519 secret derived from the Ed25519 key, used to open sealed boxes.
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> box_secret() const {
    std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> out{};
    crypto_sign_ed25519_sk_to_curve25519(out.data(), sk_.data());
    return out;
  }

 private:
  PublicKey pk_;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk_{};
};

// Memo of successful verifications, consulted only while a Scope is active on
// the current thread. The simulator activates one so a signature checked by one
// replica is not re-checked by every other replica in the same process.
class VerifyMemo {
 public:
  explicit VerifyMemo(std::size_t capacity = 1u << 20) : capacity_(capacity) {}

  class Scope {
   public:
    explicit Scope(VerifyMemo& memo) : previous_(current()) { current() = &memo; }
    ~Scope() { current() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    VerifyMemo* previous_;
  };

  static VerifyMemo*& current() {
    thread_local VerifyMemo* active = nullptr;
    return active;
  }
  bool contains(const HashDigest& key) const { return seen_.contains(key); }
  void insert(const HashDigest& key) {
    if (seen_.size() >= capacity_) seen_.clear();
    seen_.insert(key);
  }
  std::uint64_t hits = 0;

 private:
  std::size_t capacity_;
  std::set<HashDigest> seen_;
};

inline bool verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  ensure_sodium();
  auto* memo = VerifyMemo::current();
  HashDigest key;
  if (memo) {
    key = sha256({ByteView(pk.bytes), ByteView(sig.bytes), message});
    if (memo->contains(key)) {
      ++memo->hits;
      return true;
    }
  }
  bool ok = crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(), pk.bytes.data()) == 0;
  if (ok && memo) memo->insert(key);
  return ok;
}

inline std::optional<std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES>> box_public(const PublicKey& pk) {
  std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> out{};
  if (crypto_sign_ed25519_pk_to_curve25519(out.data(), pk.bytes.data()) != 0) return std::nullopt;
  return out;
}

// Sealed box to the recipient's signing key: eph_pk || crypto_box(m, nonce = H(eph_pk || rcpt_pk)).
// The ephemeral key is derived from a caller-provided seed so that runs stay deterministic;
// output is byte-compatible with crypto_box_seal_open.
inline Bytes seal(const PublicKey& recipient, ByteView plaintext, ByteView ephemeral_seed) {
  ensure_sodium();
  auto rcpt = box_public(recipient);
  if (!rcpt) throw Error(ErrorCode::InvalidParameter, "recipient key is not a valid curve point");
  auto seed = sha256(ephemeral_seed);
  std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> eph_pk{};
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> eph_sk{};
  crypto_box_seed_keypair(eph_pk.data(), eph_sk.data(), seed.bytes().data());

  std::array<std::uint8_t, crypto_box_NONCEBYTES> nonce{};
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, nonce.size());
  crypto_generichash_update(&st, eph_pk.data(), eph_pk.size());
  crypto_generichash_update(&st, rcpt->data(), rcpt->size());
  crypto_generichash_final(&st, nonce.data(), nonce.size());

  Bytes out(eph_pk.size() + crypto_box_MACBYTES + plaintext.size());
  std::copy(eph_pk.begin(), eph_pk.end(), out.begin());
  int rc = crypto_box_easy(out.data() + eph_pk.size(), plaintext.data(), plaintext.size(), nonce.data(), rcpt->data(),
                           eph_sk.data());
  sodium_memzero(eph_sk.data(), eph_sk.size());
  if (rc != 0) throw Error(ErrorCode::InvalidParameter, "sealing failed");
  return out;
}

inline std::optional<Bytes> open(const SigningKey& recipient, ByteView sealed) {
  ensure_sodium();
  if (sealed.size() < crypto_box_SEALBYTES) return std::nullopt;
  auto rcpt_pk = box_public(recipient.public_key());
  if (!rcpt_pk) return std::nullopt;
  auto sk = recipient.box_secret();
  Bytes out(sealed.size() - crypto_box_SEALBYTES);
  int rc = crypto_box_seal_open(out.data(), sealed.data(), sealed.size(), rcpt_pk->data(), sk.data());
  sodium_memzero(sk.data(), sk.size());
  if (rc != 0) return std::nullopt;
  return out;
}

}  // namespace bbox::crypto
