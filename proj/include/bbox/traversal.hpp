#pragma once

// Fractal hash-chain traversal.
//
// Chain indices follow the signer's view: k_0 = pk, k_i = h(k_{i+1}), k_n = seed.
// Keys are released in the order k_1, k_2, ..., k_n, i.e. in reverse order of
// generation. With L = ceil(log2 n) levels the traversal keeps at most L pebbles
// and spends at most L hash evaluations per released key.
//
// Internally the chain is embedded in a virtual chain of length N = 2^L whose
// virtual position v holds k_{v - (N - n)}; positions below N - n are hashes past
// pk and are never released. A level-j pebble rests at odd multiples of 2^j. When
// the walk consumes it, it restarts 2^j above its next resting place, copying the
// value of the pebble already parked there, and descends two positions per step.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "bbox/error.hpp"
#include "bbox/hash.hpp"

namespace bbox::chainsig {

// A stored chain element: h^position(value) == pk.
struct Pebble {
  std::uint64_t position = 0;
  HashDigest value;

  friend bool operator==(const Pebble&, const Pebble&) = default;
};

class FractalTraversal {
 public:
  FractalTraversal() = default;

  // Walks the whole chain once from the seed (n hashes). Returns k_0 through `pk_out`.
  static FractalTraversal build(const HashDigest& seed, std::uint64_t n, const ChainHash& h, HashDigest& pk_out) {
    FractalTraversal t(n);
    t.slots_ = t.schedule(t.time_);
    // values needed at virtual positions in (time_, N]; walk down from the seed
    std::vector<std::size_t> order(t.slots_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return t.slots_[a].position > t.slots_[b].position; });
    HashDigest v = seed;
    std::uint64_t at = t.virtual_length();
    for (auto idx : order) {
      auto target = t.slots_[idx].position;
      v = h.iterate(v, at - target);
      at = target;
      t.slots_[idx].value = v;
    }
    pk_out = h.iterate(v, at - t.time_);
    return t;
  }

  // Restores the schedule for `released` keys already handed out and attaches stored values.
  static FractalTraversal restore(std::uint64_t n, std::uint64_t released, std::span<const Pebble> pebbles) {
    if (n == 0 || released > n) throw Error(ErrorCode::Decode, "pebble state counters out of range");
    FractalTraversal t(n);
    t.time_ += released;
    t.slots_ = t.schedule(t.time_);
    if (pebbles.size() != t.slots_.size()) throw Error(ErrorCode::Decode, "pebble count does not match schedule");
    for (std::size_t i = 0; i < pebbles.size(); ++i) {
      if (t.real(t.slots_[i].position) != pebbles[i].position)
        throw Error(ErrorCode::Decode, "pebble position does not match schedule");
      t.slots_[i].value = pebbles[i].value;
    }
    return t;
  }

  std::uint64_t length() const { return n_; }
  std::uint64_t released() const { return time_ - offset_; }
  unsigned levels() const { return levels_; }

  // Releases the next key k_{released()+1}.
  HashDigest next(const ChainHash& h) {
    if (released() >= n_) throw Error(ErrorCode::ChainExhausted, "hash chain exhausted");
    ++time_;
    for (auto& s : slots_) {
      if (s.position != s.destination) {
        s.position -= 2;
        s.value = h(h(s.value));
      }
    }
    sort_slots();
    auto& low = slots_.front();
    if (time_ % 2 == 1) return h(low.value);

    HashDigest out = low.value;
    std::uint64_t span = std::uint64_t{1} << low.level;
    low.destination += 2 * span;
    low.position = low.destination + span;
    if (low.destination > virtual_length()) {
      slots_.erase(slots_.begin());
    } else {
      auto src = std::find_if(slots_.begin() + 1, slots_.end(),
                              [&](const Slot& s) { return s.position == low.position; });
      if (src == slots_.end()) throw Error(ErrorCode::InvalidParameter, "pebble schedule broken");
      low.value = src->value;
    }
    sort_slots();
    return out;
  }

  // Stored pebbles with real chain positions, in position order.
  std::vector<Pebble> pebbles() const {
    std::vector<Pebble> out;
    out.reserve(slots_.size());
    for (const auto& s : slots_) out.push_back({real(s.position), s.value});
    return out;
  }

 private:
  struct Slot {
    unsigned level = 0;
    std::uint64_t position = 0;
    std::uint64_t destination = 0;
    HashDigest value;
  };

  explicit FractalTraversal(std::uint64_t n) : n_(n) {
    if (n == 0) throw Error(ErrorCode::InvalidParameter, "chain length must be at least 1");
    levels_ = n <= 1 ? 1u : static_cast<unsigned>(std::bit_width(n - 1));
    if (levels_ > 62) throw Error(ErrorCode::InvalidParameter, "chain length too large");
    offset_ = virtual_length() - n;
    time_ = offset_;
  }

  std::uint64_t virtual_length() const { return std::uint64_t{1} << levels_; }
  std::uint64_t real(std::uint64_t v) const { return v - offset_; }

  // Closed form of every live pebble after step t: a level-j pebble targets the
  // smallest odd multiple of 2^j above t, and has descended from 2^j above it at
  // speed two since its previous target was consumed.
  std::vector<Slot> schedule(std::uint64_t t) const {
    std::vector<Slot> out;
    for (unsigned j = 1; j <= levels_; ++j) {
      std::uint64_t span = std::uint64_t{1} << j;
      std::uint64_t dest;
      if (t < span) {
        dest = span;
      } else {
        std::uint64_t mult = t / span + 1;
        dest = (mult % 2 == 1 ? mult : mult + 1) * span;
      }
      if (dest > virtual_length()) continue;
      std::uint64_t pos = dest;
      if (dest != span) {
        std::uint64_t moves = std::min(t - (dest - 2 * span), span / 2);
        pos = dest + span - 2 * moves;
      }
      out.push_back({j, pos, dest, {}});
    }
    std::stable_sort(out.begin(), out.end(), [](const Slot& a, const Slot& b) { return a.position < b.position; });
    return out;
  }

  void sort_slots() {
    std::stable_sort(slots_.begin(), slots_.end(),
                     [](const Slot& a, const Slot& b) { return a.position < b.position; });
  }

  std::uint64_t n_ = 0;
  unsigned levels_ = 0;
  std::uint64_t offset_ = 0;
  std::uint64_t time_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace bbox::chainsig
