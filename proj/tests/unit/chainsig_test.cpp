#include "bbox/chainsig.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <string>

#include "support/oracles.hpp"

namespace bbox::chainsig {
namespace {

using bbox::testing::ceil_log2;
using bbox::testing::naive_chain;

Bytes seed_of(std::uint8_t fill, std::size_t len = 32) { return Bytes(len, fill); }

Bytes message(std::uint64_t i) { return to_bytes("reading-" + std::to_string(i)); }

TEST(ChainHashTest, FourFoldHashOfZeroSeed) {
  // computed with sha256sum applied four times to 32 zero bytes
  auto kp = ot_keygen(4, Bytes(32, 0));
  EXPECT_EQ(kp.public_key.hex(), "fe15c0d3ebe314fad720a08b839a004c2e6386f5aecc19ec74807d1920cb6aeb");
}

TEST(ChainHashTest, TruncatesForShortLambda) {
  ChainHash full(256), half(128), tiny(64);
  auto data = as_bytes("abc");
  EXPECT_EQ(half(data).size(), 16u);
  EXPECT_EQ(tiny(data).size(), 8u);
  EXPECT_EQ(full(data).hex().substr(0, 32), half(data).hex());
  EXPECT_THROW(ChainHash(100), Error);
}

TEST(KeygenTest, FiveKeyChainUsesConsecutivePairs) {
  auto seed = seed_of(5);
  auto keys = naive_chain(seed, 5);
  auto kp = ot_keygen(5, seed);
  EXPECT_EQ(kp.public_key, keys[0]);

  ChainHash h;
  for (std::uint64_t i = 1; i <= 5; ++i) {
    auto m = message(i);
    auto sig = ot_sign(kp.state, m);
    EXPECT_EQ(sig.sigma2, keys[i]) << "signature " << i;
    EXPECT_EQ(sig.sigma1, bind_message(h, m, keys[i - 1]));
    EXPECT_EQ(kp.state.counter(), i);
  }
  EXPECT_TRUE(kp.state.exhausted());
}

TEST(KeygenTest, SingleElementChain) {
  auto seed = seed_of(9);
  auto kp = ot_keygen(1, seed);
  ChainHash h;
  EXPECT_EQ(kp.public_key, h(HashDigest::from_bytes(seed)));
  SignStats stats;
  auto sig = ot_sign(kp.state, message(0), &stats);
  EXPECT_EQ(sig.sigma2, HashDigest::from_bytes(seed));
  EXPECT_EQ(stats.derivation_hashes, 0u);
  EXPECT_THROW(ot_sign(kp.state, message(1)), Error);
}

TEST(KeygenTest, RejectsBadParameters) {
  try {
    ot_keygen(0, seed_of(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidParameter);
  }
  EXPECT_THROW(ot_keygen(8, seed_of(1, 31)), Error);
  EXPECT_THROW(ot_keygen(8, Bytes{}), Error);
  EXPECT_NO_THROW(ot_keygen(8, seed_of(1, 8), 64));
}

TEST(SignTest, ExhaustionIsHardFailure) {
  auto kp = ot_keygen(3, seed_of(2));
  for (int i = 0; i < 3; ++i) ot_sign(kp.state, message(i));
  try {
    ot_sign(kp.state, message(3));
    FAIL() << "expected ChainExhausted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChainExhausted);
  }
}

// Every released key against the materialized chain, for every small length and
// for powers of two (and neighbours) up to 2^12.
TEST(SignTest, TraversalMatchesNaiveChain) {
  std::set<std::uint64_t> lengths;
  for (std::uint64_t n = 1; n <= 130; ++n) lengths.insert(n);
  for (unsigned k = 1; k <= 12; ++k) {
    auto p = std::uint64_t{1} << k;
    lengths.insert({p - 1, p, p + 1});
  }
  for (auto n : lengths) {
    auto seed = seed_of(static_cast<std::uint8_t>(n));
    auto keys = naive_chain(seed, n);
    auto kp = ot_keygen(n, seed);
    ASSERT_EQ(kp.public_key, keys[0]) << "n=" << n;
    for (std::uint64_t i = 1; i <= n; ++i) {
      auto sig = ot_sign(kp.state, message(i));
      ASSERT_EQ(sig.sigma2, keys[i]) << "n=" << n << " i=" << i;
    }
  }
}

TEST(SignTest, DerivationBudgetAndPebbleBound) {
  for (std::uint64_t n : {2ull, 3ull, 7ull, 100ull, 1000ull, 1024ull, 4097ull}) {
    auto kp = ot_keygen(n, seed_of(3));
    auto budget = ceil_log2(n);
    std::uint64_t worst = 0;
    while (!kp.state.exhausted()) {
      ASSERT_LE(kp.state.pebbles().size(), budget + 1) << "n=" << n;
      SignStats stats;
      ot_sign(kp.state, message(kp.state.counter()), &stats);
      worst = std::max(worst, stats.derivation_hashes);
      ASSERT_EQ(stats.binding_hashes, 1u);
    }
    EXPECT_LE(worst, budget) << "n=" << n;
  }
}

TEST(SignTest, StoredPebblesHashToPublicKey) {
  auto kp = ot_keygen(300, seed_of(4));
  ChainHash h;
  for (int step = 0; step < 300; step += 37) {
    for (const auto& p : kp.state.pebbles()) EXPECT_EQ(h.iterate(p.value, p.position), kp.public_key);
    for (int i = 0; i < 37 && !kp.state.exhausted(); ++i) ot_sign(kp.state, message(i));
  }
}

TEST(SignTest, OneThousandTwentyFourKeysChainBackwards) {
  auto kp = ot_keygen(1024, seed_of(6));
  ChainHash h;
  auto previous = kp.public_key;
  auto keys = naive_chain(seed_of(6), 1024);
  for (std::uint64_t i = 1; i <= 1024; ++i) {
    auto sig = ot_sign(kp.state, message(i));
    ASSERT_EQ(h(sig.sigma2), previous);
    ASSERT_EQ(sig.sigma2, keys[i]);
    previous = sig.sigma2;
  }
}

TEST(SignTest, ShortLambdaChains) {
  for (unsigned lambda : {64u, 128u}) {
    auto seed = seed_of(7, lambda / 8);
    auto keys = naive_chain(seed, 40, lambda);
    auto kp = ot_keygen(40, seed, lambda);
    VerifierState vs{kp.public_key, 10};
    for (std::uint64_t i = 1; i <= 40; ++i) {
      auto m = message(i);
      auto sig = ot_sign(kp.state, m);
      EXPECT_EQ(sig.sigma2, keys[i]);
      auto out = ot_verify(vs, m, sig);
      ASSERT_TRUE(out.accepted);
      vs = out.next;
    }
  }
}

class VerifyTest : public ::testing::Test {
 protected:
  void SetUp() override {
    kp_ = ot_keygen(256, seed_of(11));
    vs_ = {kp_.public_key, 50};
  }
  ChainSignature sign(std::uint64_t i) { return ot_sign(kp_.state, message(i)); }

  KeyPair kp_;
  VerifierState vs_;
};

TEST_F(VerifyTest, ConsecutiveSignatureCostsOneWalkHashAndOneBindingHash) {
  for (std::uint64_t i = 1; i <= 20; ++i) {
    auto sig = sign(i);
    auto out = ot_verify(vs_, message(i), sig);
    ASSERT_TRUE(out.accepted);
    EXPECT_EQ(out.walk_length, 1u);
    EXPECT_EQ(out.walk_hashes, 1u);
    EXPECT_EQ(out.binding_hashes, 1u);
    EXPECT_EQ(out.next.anchor, sig.sigma2);
    vs_ = out.next;
  }
}

TEST_F(VerifyTest, WalkLengthIsGapPlusOne) {
  for (std::uint64_t gap : {0u, 1u, 5u, 20u, 49u}) {
    for (std::uint64_t g = 0; g < gap; ++g) sign(0);  // lost broadcasts
    auto sig = sign(1);
    auto out = ot_verify(vs_, message(1), sig);
    ASSERT_TRUE(out.accepted) << "gap=" << gap;
    EXPECT_EQ(out.walk_length, gap + 1);
    vs_ = out.next;
  }
}

TEST_F(VerifyTest, GapEqualToBoundIsRejected) {
  for (int g = 0; g < 50; ++g) sign(0);
  auto sig = sign(1);
  auto out = ot_verify(vs_, message(1), sig);
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.reason, Rejection::AnchorNotReached);
  EXPECT_EQ(out.walk_hashes, 50u);
  EXPECT_EQ(out.next, vs_);
}

TEST_F(VerifyTest, BindingMismatchOnTamperedMessage) {
  auto sig = sign(1);
  auto m = message(1);
  m[0] ^= 0x01;
  auto out = ot_verify(vs_, m, sig);
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.reason, Rejection::BindingMismatch);
  EXPECT_EQ(out.next, vs_);
}

TEST_F(VerifyTest, LengthPrefixSeparatesMessageFromKey) {
  // moving a byte across the message/key boundary must not preserve sigma1
  ChainHash h;
  auto key = kp_.public_key;
  Bytes m1 = to_bytes("ab");
  Bytes m2 = to_bytes("a");
  EXPECT_NE(bind_message(h, m1, key), bind_message(h, m2, key));
}

TEST_F(VerifyTest, MalformedDigestLengths) {
  auto sig = sign(1);
  sig.sigma2 = HashDigest::zero(16);
  EXPECT_EQ(ot_verify(vs_, message(1), sig).reason, Rejection::Malformed);
}

TEST_F(VerifyTest, IndexHintIsIgnored) {
  auto sig = sign(1);
  sig.index_hint = 999999;
  EXPECT_TRUE(ot_verify(vs_, message(1), sig).accepted);
}

// Property: verification is a pure function, anchors descend strictly along the
// chain, and compressed signatures are accepted exactly when full ones are.
TEST(VerifyProperty, DeterminismMonotonicityCompressedEquivalence) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 40; ++trial) {
    Bytes seed(32);
    for (auto& b : seed) b = static_cast<std::uint8_t>(rng());
    auto kp = ot_keygen(200, seed);
    VerifierState vs{kp.public_key, 8};
    ChainHash h;
    std::uint64_t skipped = 0;  // signatures since the last accepted one
    while (kp.state.remaining() > 8) {
      auto lost = rng() % 9;
      for (std::uint64_t g = 0; g < lost; ++g) ot_sign(kp.state, message(g));
      skipped += lost;
      Bytes m(1 + rng() % 40);
      for (auto& b : m) b = static_cast<std::uint8_t>(rng());
      auto sig = ot_sign(kp.state, m);
      bool tamper = rng() % 4 == 0;
      Bytes received = m;
      if (tamper) received[rng() % received.size()] ^= 0x80;

      auto a = ot_verify(vs, received, sig);
      auto b = ot_verify(vs, received, sig);
      ASSERT_EQ(a.accepted, b.accepted);
      ASSERT_EQ(a.walk_length, b.walk_length);
      ASSERT_EQ(a.next, b.next);

      auto c = ot_verify(vs, m, sig.compress());
      auto full_clean = ot_verify(vs, m, sig);
      ASSERT_EQ(c.accepted, full_clean.accepted);
      ASSERT_EQ(c.walk_length, full_clean.walk_length);
      if (c.accepted) {
        ASSERT_EQ(expand(sig.compress(), m), sig);
      }

      bool in_window = skipped < 8;
      ASSERT_EQ(a.accepted, !tamper && in_window);
      if (a.accepted) {
        ASSERT_EQ(a.walk_length, skipped + 1);
        ASSERT_EQ(h.iterate(a.next.anchor, a.walk_length), vs.anchor);
        vs = a.next;
        skipped = 0;
      } else if (!in_window) {
        break;  // fell out of the window; a rejoin would be required
      } else {
        ++skipped;
      }
    }
  }
}

TEST(WireFormatTest, SizesAndLayout) {
  auto kp = ot_keygen(16, seed_of(1));
  auto sig = ot_sign(kp.state, message(1));
  auto full = sig.encode();
  ASSERT_EQ(full.size(), 6u + 64u);
  EXPECT_EQ(full[0], 0x01);
  EXPECT_EQ(full[1], 0x00);
  EXPECT_EQ(full[5], 0x01);  // index hint 1, big-endian
  auto compressed = sig.compress().encode();
  ASSERT_EQ(compressed.size(), 6u + 32u);
  EXPECT_EQ(compressed[1], 0x01);
  EXPECT_EQ(ChainSignature::decode(full), sig);
  EXPECT_EQ(ChainSignature::decode(compressed), sig.compress());
}

TEST(WireFormatTest, RoundTripAcrossLambdas) {
  std::mt19937_64 rng(7);
  for (unsigned lambda : {64u, 128u, 256u}) {
    for (int i = 0; i < 20; ++i) {
      Bytes a(lambda / 8), b(lambda / 8);
      for (auto& x : a) x = static_cast<std::uint8_t>(rng());
      for (auto& x : b) x = static_cast<std::uint8_t>(rng());
      ChainSignature sig{HashDigest::from_bytes(a), HashDigest::from_bytes(b), static_cast<std::uint32_t>(rng())};
      EXPECT_EQ(ChainSignature::decode(sig.encode()), sig);
      EXPECT_EQ(ChainSignature::decode(sig.compress().encode()), sig.compress());
    }
  }
}

TEST(WireFormatTest, RejectsMalformed) {
  auto kp = ot_keygen(4, seed_of(1));
  auto wire = ot_sign(kp.state, message(1)).encode();
  auto bad_version = wire;
  bad_version[0] = 0x02;
  EXPECT_THROW(ChainSignature::decode(bad_version), Error);
  auto bad_mode = wire;
  bad_mode[1] = 0x07;
  EXPECT_THROW(ChainSignature::decode(bad_mode), Error);
  EXPECT_THROW(ChainSignature::decode(ByteView(wire).first(wire.size() - 1)), Error);
  EXPECT_THROW(ChainSignature::decode(ByteView(wire).first(3)), Error);
}

TEST(StateFileTest, RoundTripAtEveryCounterIsByteIdentical) {
  auto kp = ot_keygen(77, seed_of(12));
  auto twin = kp;
  while (true) {
    auto bytes = serialize_signer_state(kp.state);
    auto restored = deserialize_signer_state(bytes);
    ASSERT_EQ(serialize_signer_state(restored), bytes);
    ASSERT_EQ(restored.public_key(), kp.public_key);
    if (kp.state.exhausted()) break;
    auto a = ot_sign(restored, message(1));
    auto b = ot_sign(twin.state, message(1));
    ASSERT_EQ(a, b);
    ot_sign(kp.state, message(1));
  }
}

TEST(StateFileTest, HeaderLayout) {
  auto kp = ot_keygen(8, seed_of(1));
  auto bytes = serialize_signer_state(kp.state);
  ASSERT_GE(bytes.size(), 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BBCS");
  EXPECT_EQ(bytes[4], kStateFileVersion);
  EXPECT_EQ(bytes[5], 8);  // 256 / 32
  EXPECT_EQ(bytes[13], 8);  // n
  std::size_t count = (bytes[22] << 8) | bytes[23];
  EXPECT_EQ(bytes.size(), 24 + count * (8 + 32));
}

TEST(StateFileTest, MillionKeyChainFitsInTwentyOnePebbles) {
  auto kp = ot_keygen(1u << 20, seed_of(13));
  auto pebbles = kp.state.pebbles();
  EXPECT_EQ(pebbles.size(), 21u);
  EXPECT_EQ(pebbles.size() * 32, 672u);
  EXPECT_EQ(serialize_signer_state(kp.state).size(), 24u + 21u * 40u);
  // the reference lower bound for 2^26 keys is 26 * 256 bits
  EXPECT_EQ(26 * 256 / 8, 832);
}

TEST(StateFileTest, RejectsCorruption) {
  auto kp = ot_keygen(64, seed_of(14));
  for (int i = 0; i < 9; ++i) ot_sign(kp.state, message(i));
  auto bytes = serialize_signer_state(kp.state);

  auto expect_decode_error = [](const Bytes& b) {
    try {
      deserialize_signer_state(b);
      ADD_FAILURE() << "accepted corrupted state";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::Decode);
    }
  };
  auto magic = bytes;
  magic[0] = 'X';
  expect_decode_error(magic);
  expect_decode_error(Bytes(bytes.begin(), bytes.end() - 1));
  auto extra = bytes;
  extra.push_back(0);
  expect_decode_error(extra);
  auto moved = bytes;
  moved[24 + 40 + 7] ^= 0x01;  // position of the first traversal pebble
  expect_decode_error(moved);
  auto lambda = bytes;
  lambda[5] = 3;
  expect_decode_error(lambda);
}

}  // namespace
}  // namespace bbox::chainsig
