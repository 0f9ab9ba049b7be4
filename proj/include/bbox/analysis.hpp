#pragma once

// Cost model, crossover and collision analyses, and the signature benchmark.
// All acceptance-relevant outputs are hash-operation counts; wall-clock times
// are reported alongside for information only.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bbox/chainsig.hpp"
#include "bbox/error.hpp"

namespace bbox::analysis {

struct CostModel {
  double per_hash_verify_ms = 0.031;
  double conventional_sign_ms = 4200;
  double conventional_verify_ms = 42.55;
  double per_sig_bytes_chain = 64;
  double per_sig_bytes_conventional = 64;

  void validate() const {
    for (double v : {per_hash_verify_ms, conventional_sign_ms, conventional_verify_ms, per_sig_bytes_chain,
                     per_sig_bytes_conventional}) {
      if (!(v > 0)) throw Error(ErrorCode::InvalidParameter, "cost model entries must be strictly positive");
    }
  }
};

// g* = ceil(conventional_verify / per_hash_verify): the gap at which the
// verifier's catch-up hashing costs at least one conventional verification.
// Empty when the conventional cost is unbounded.
inline std::optional<std::uint64_t> crossover(const CostModel& m) {
  m.validate();
  if (!std::isfinite(m.conventional_verify_ms)) return std::nullopt;
  // both costs as integer mantissa * 2^exponent, then an exact ceiling division
  auto split = [](double v, int& e) {
    double f = std::frexp(v, &e);
    e -= 53;
    return static_cast<unsigned __int128>(std::ldexp(f, 53));
  };
  int ep = 0, ec = 0;
  auto mp = split(m.per_hash_verify_ms, ep);
  auto mc = split(m.conventional_verify_ms, ec);
  int d = ec - ep;
  if (d > 74) return std::nullopt;
  if (d < -74) return 1;
  unsigned __int128 num = d >= 0 ? mc << d : mc;
  unsigned __int128 den = d >= 0 ? mp : mp << -d;
  unsigned __int128 g = (num + den - 1) / den;
  if (g >> 63) return std::nullopt;
  return static_cast<std::uint64_t>(g);
}

// gap, walk_length, chain_ms (gap * per_hash), conventional_ms
inline std::string crossover_csv(const CostModel& m, std::uint64_t max_gap, std::uint64_t step = 1) {
  m.validate();
  if (step == 0) throw Error(ErrorCode::InvalidParameter, "step must be positive");
  std::ostringstream out;
  out.precision(10);
  out << "gap,walk_length,chain_ms,conventional_ms\n";
  for (std::uint64_t g = 0; g <= max_gap; g += step) {
    out << g << ',' << g + 1 << ',' << static_cast<double>(g) * m.per_hash_verify_ms << ','
        << m.conventional_verify_ms << '\n';
  }
  return out.str();
}

// p = 1 - exp(-2^n (2^n - 1) / 2^(lambda + 1)), in extended precision.
inline long double collision_probability(unsigned n, unsigned lambda) {
  if (n > 64) throw Error(ErrorCode::InvalidParameter, "chain log-length must be at most 64");
  if (lambda != 64 && lambda != 128 && lambda != 256) throw Error(ErrorCode::InvalidParameter, "lambda must be 64, 128 or 256");
  long double pairs_less_one = std::ldexp(1.0L, static_cast<int>(n)) - 1.0L;  // exact up to 2^64 - 1
  long double x = std::ldexp(pairs_less_one, static_cast<int>(n) - static_cast<int>(lambda) - 1);
  return -std::expm1(-x);
}

inline std::string collision_csv(unsigned n_min, unsigned n_max, const std::vector<unsigned>& lambdas) {
  std::ostringstream out;
  out.precision(20);
  out << "n,lambda,p\n";
  for (auto lambda : lambdas) {
    for (unsigned n = n_min; n <= n_max; ++n) out << n << ',' << lambda << ',' << collision_probability(n, lambda) << '\n';
  }
  return out.str();
}

struct BenchReport {
  std::uint64_t n = 0;
  unsigned lambda = 256;
  std::uint64_t rounds = 0;
  std::uint64_t pebbles = 0;
  std::uint64_t state_payload_bytes = 0;  // stored chain elements only
  std::uint64_t state_file_bytes = 0;     // serialized with header and positions
  std::uint64_t keygen_hashes = 0;
  std::uint64_t max_sign_hashes = 0;
  double mean_sign_hashes = 0;
  std::uint64_t verify_walk_hashes = 0;  // per verification, steady state
  std::uint64_t verify_binding_hashes = 0;
  std::uint64_t signature_bytes = 0;  // sigma1 || sigma2
  double keygen_ms = 0;
  double sign_ms = 0;
  double verify_ms = 0;

  static std::string csv_header() {
    return "n,lambda,rounds,pebbles,state_payload_bytes,state_file_bytes,keygen_hashes,max_sign_hashes,"
           "mean_sign_hashes,verify_walk_hashes,verify_binding_hashes,signature_bytes,keygen_ms,sign_ms,verify_ms";
  }
  std::string csv_row() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << n << ',' << lambda << ',' << rounds << ',' << pebbles << ',' << state_payload_bytes << ','
        << state_file_bytes << ',' << keygen_hashes << ',' << max_sign_hashes << ',' << mean_sign_hashes << ','
        << verify_walk_hashes << ',' << verify_binding_hashes << ',' << signature_bytes << ',' << keygen_ms << ','
        << sign_ms << ',' << verify_ms;
    return out.str();
  }
};

// Keygen, then `rounds` consecutive sign/verify pairs from the start of the chain.
inline BenchReport bench_chainsig(std::uint64_t n, std::uint64_t rounds, unsigned lambda = 256, std::uint64_t seed = 1) {
  if (n < 16 || n > (std::uint64_t{1} << 26) || (n & (n - 1)) != 0)
    throw Error(ErrorCode::InvalidParameter, "n must be a power of two in [2^4, 2^26]");
  if (rounds > n) throw Error(ErrorCode::InvalidParameter, "rounds must not exceed n");
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };

  BenchReport r;
  r.n = n;
  r.lambda = lambda;
  r.rounds = rounds;
  Bytes seed_bytes(lambda / 8);
  for (std::size_t i = 0; i < seed_bytes.size(); ++i) seed_bytes[i] = static_cast<std::uint8_t>((seed >> (8 * (i % 8))) + i);

  HashCounter keygen;
  auto t0 = clock::now();
  auto kp = chainsig::ot_keygen(n, seed_bytes, lambda, &keygen);
  r.keygen_ms = ms(clock::now() - t0);
  r.keygen_hashes = keygen.calls;
  r.pebbles = kp.state.pebbles().size();
  r.state_payload_bytes = r.pebbles * (lambda / 8);
  r.state_file_bytes = chainsig::serialize_signer_state(kp.state).size();

  std::vector<chainsig::ChainSignature> sigs;
  sigs.reserve(rounds);
  std::uint64_t total = 0;
  auto t1 = clock::now();
  for (std::uint64_t i = 0; i < rounds; ++i) {
    chainsig::SignStats st;
    sigs.push_back(chainsig::ot_sign(kp.state, as_bytes("bench"), &st));
    total += st.derivation_hashes;
    r.max_sign_hashes = std::max(r.max_sign_hashes, st.derivation_hashes);
  }
  r.sign_ms = ms(clock::now() - t1);
  r.mean_sign_hashes = rounds ? static_cast<double>(total) / static_cast<double>(rounds) : 0;

  chainsig::VerifierState v{kp.public_key, 1};
  auto t2 = clock::now();
  for (const auto& s : sigs) {
    auto out = chainsig::ot_verify(v, as_bytes("bench"), s);
    if (!out.accepted) throw Error(ErrorCode::InvalidParameter, "benchmark signature rejected");
    r.verify_walk_hashes = std::max(r.verify_walk_hashes, out.walk_hashes);
    r.verify_binding_hashes = std::max(r.verify_binding_hashes, out.binding_hashes);
    v = out.next;
  }
  r.verify_ms = ms(clock::now() - t2);
  r.signature_bytes = 2 * (lambda / 8);
  return r;
}

}  // namespace bbox::analysis
