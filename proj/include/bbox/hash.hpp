#pragma once

#include <sodium.h>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "bbox/bytes.hpp"
#include "bbox/error.hpp"

namespace bbox {

inline void ensure_sodium() {
  static const bool ready = [] { return sodium_init() >= 0; }();
  if (!ready) throw Error(ErrorCode::InvalidParameter, "libsodium failed to initialize");
}

inline bool supported_lambda(unsigned lambda) { return lambda == 64 || lambda == 128 || lambda == 256; }

// Fixed-length hash output: lambda/8 bytes, lambda in {64, 128, 256}.
class HashDigest {
 public:
  static constexpr std::size_t kMaxBytes = 32;

  HashDigest() = default;

  static HashDigest from_bytes(ByteView data) {
    if (data.size() != 8 && data.size() != 16 && data.size() != 32)
      throw Error(ErrorCode::InvalidParameter, "digest length must be 8, 16 or 32 bytes");
    HashDigest d;
    std::copy(data.begin(), data.end(), d.data_.begin());
    d.size_ = static_cast<std::uint8_t>(data.size());
    return d;
  }
  static HashDigest from_hex(std::string_view hex) { return from_bytes(bbox::from_hex(hex)); }
  static HashDigest zero(std::size_t bytes) {
    std::array<std::uint8_t, kMaxBytes> z{};
    return from_bytes(ByteView(z.data(), bytes));
  }

  bool empty() const { return size_ == 0; }
  std::size_t size() const { return size_; }
  ByteView bytes() const { return {data_.data(), size_}; }
  std::string hex() const { return to_hex(bytes()); }

  std::uint8_t& operator[](std::size_t i) { return data_[i]; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const HashDigest& a, const HashDigest& b) {
    return a.size_ == b.size_ && std::equal(a.data_.begin(), a.data_.begin() + a.size_, b.data_.begin());
  }
  friend std::strong_ordering operator<=>(const HashDigest& a, const HashDigest& b) {
    if (auto c = a.size_ <=> b.size_; c != 0) return c;
    return std::lexicographical_compare_three_way(a.data_.begin(), a.data_.begin() + a.size_, b.data_.begin(),
                                                  b.data_.begin() + b.size_);
  }

 private:
  std::array<std::uint8_t, kMaxBytes> data_{};
  std::uint8_t size_ = 0;
};

inline HashDigest sha256(std::initializer_list<ByteView> parts) {
  ensure_sodium();
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  for (auto p : parts) crypto_hash_sha256_update(&st, p.data(), p.size());
  std::array<std::uint8_t, 32> out{};
  crypto_hash_sha256_final(&st, out.data());
  return HashDigest::from_bytes(out);
}

inline HashDigest sha256(ByteView data) { return sha256({data}); }

// Instrumented call counter; every evaluation of a ChainHash bumps it.
struct HashCounter {
  std::uint64_t calls = 0;
};

// h: {0,1}* -> {0,1}^lambda, SHA-256 truncated to lambda/8 bytes.
class ChainHash {
 public:
  explicit ChainHash(unsigned lambda = 256, HashCounter* counter = nullptr) : lambda_(lambda), counter_(counter) {
    if (!supported_lambda(lambda)) throw Error(ErrorCode::InvalidParameter, "lambda must be 64, 128 or 256");
  }

  unsigned lambda() const { return lambda_; }
  std::size_t digest_bytes() const { return lambda_ / 8; }
  HashCounter* counter() const { return counter_; }

  HashDigest operator()(std::initializer_list<ByteView> parts) const {
    if (counter_) ++counter_->calls;
    auto full = sha256(parts);
    return HashDigest::from_bytes(full.bytes().first(digest_bytes()));
  }
  HashDigest operator()(ByteView data) const { return (*this)({data}); }
  HashDigest operator()(const HashDigest& d) const { return (*this)({d.bytes()}); }

  HashDigest iterate(HashDigest d, std::uint64_t times) const {
    for (std::uint64_t i = 0; i < times; ++i) d = (*this)(d);
    return d;
  }

 private:
  unsigned lambda_;
  HashCounter* counter_;
};

}  // namespace bbox
