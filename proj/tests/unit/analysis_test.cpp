#include <gmp.h>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "bbox/analysis.hpp"
#include "support/oracles.hpp"

using namespace bbox;
using namespace bbox::analysis;

namespace {

// Least g with g * ph >= conv, over the exact rational values of the two doubles.
std::uint64_t exact_crossover(double ph, double conv) {
  mpq_t p, c, q;
  mpq_inits(p, c, q, nullptr);
  mpq_set_d(p, ph);
  mpq_set_d(c, conv);
  mpq_div(q, c, p);
  mpz_t g;
  mpz_init(g);
  mpz_cdiv_q(g, mpq_numref(q), mpq_denref(q));
  auto out = static_cast<std::uint64_t>(mpz_get_ui(g));
  mpz_clear(g);
  mpq_clears(p, c, q, nullptr);
  return out;
}

CostModel model(double ph, double conv) {
  CostModel m;
  m.per_hash_verify_ms = ph;
  m.conventional_verify_ms = conv;
  return m;
}

}  // namespace

TEST(Crossover, KnownPoints) {
  EXPECT_EQ(crossover(model(0.0177, 42.55)), 2404u);
  EXPECT_EQ(crossover(CostModel{}), 1373u);
  EXPECT_EQ(crossover(model(1, 1)), 1u);
  EXPECT_EQ(crossover(model(2, 1)), 1u);
  EXPECT_EQ(crossover(model(0.5, 2)), 4u);
  EXPECT_FALSE(crossover(model(0.0177, std::numeric_limits<double>::infinity())).has_value());
}

TEST(Crossover, RejectsNonPositiveCosts) {
  EXPECT_THROW(crossover(model(0, 1)), Error);
  EXPECT_THROW(crossover(model(-1, 1)), Error);
  EXPECT_THROW(crossover(model(1, 0)), Error);
  EXPECT_THROW(crossover(model(std::nan(""), 1)), Error);
}

TEST(Crossover, MatchesRationalArithmetic) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::uint64_t> per_hash(1, 100000);
  std::uniform_int_distribution<std::uint64_t> conv(1, 10000000);
  std::uniform_int_distribution<std::uint64_t> mult(1, 5000);
  for (int i = 0; i < 20000; ++i) {
    double ph = static_cast<double>(per_hash(rng)) / 1e4;
    // every other case sits on a decimal boundary, where conv / ph is an integer before rounding
    double cv = (i % 2) ? static_cast<double>(conv(rng)) / 1e2 : ph * static_cast<double>(mult(rng));
    auto g = crossover(model(ph, cv));
    ASSERT_TRUE(g.has_value());
    ASSERT_EQ(*g, exact_crossover(ph, cv)) << "ph=" << ph << " conv=" << cv;
  }
  EXPECT_EQ(crossover(model(1e-300, 1e300)), std::nullopt);
  EXPECT_EQ(crossover(model(1e300, 1e-300)), 1u);
}

TEST(Crossover, CsvSweepShape) {
  auto csv = crossover_csv(model(0.5, 2), 4);
  EXPECT_EQ(csv,
            "gap,walk_length,chain_ms,conventional_ms\n"
            "0,1,0,2\n1,2,0.5,2\n2,3,1,2\n3,4,1.5,2\n4,5,2,2\n");
  EXPECT_THROW(crossover_csv(model(0.5, 2), 4, 0), Error);
  std::istringstream in(crossover_csv(model(0.5, 2), 100, 10));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 12u);
}

// Frozen from a 256-bit MPFR evaluation of 1 - exp(-2^n (2^n - 1) / 2^(lambda + 1)) at n = 26.
TEST(Collision, MatchesFrozenOracle) {
  const struct {
    unsigned lambda;
    long double p;
  } cases[] = {{64, 1.2206286040379135264e-4L}, {128, 6.6174448018166082463e-24L}, {256, 1.9446922453534337312e-62L}};
  for (const auto& c : cases) {
    long double p = collision_probability(26, c.lambda);
    EXPECT_NEAR(static_cast<double>(p / c.p), 1.0, 1e-15) << c.lambda;
  }
}

TEST(Collision, EdgesAndValidation) {
  EXPECT_EQ(collision_probability(0, 64), 0.0L);
  EXPECT_NEAR(static_cast<double>(collision_probability(32, 64)), -std::expm1(-0.5 * (1 - std::ldexp(1.0, -32))), 1e-15);
  EXPECT_EQ(collision_probability(64, 64), 1.0L);
  for (unsigned n = 1; n < 64; ++n) EXPECT_LT(collision_probability(n, 128), collision_probability(n + 1, 128));
  EXPECT_THROW(collision_probability(65, 64), Error);
  EXPECT_THROW(collision_probability(10, 100), Error);
}

TEST(Collision, SweepCsv) {
  auto csv = collision_csv(1, 3, {64});
  EXPECT_EQ(csv.rfind("n,lambda,p\n1,64,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Bench, ReportsHashCountsAndSizes) {
  auto r = bench_chainsig(1 << 20, 64);
  EXPECT_EQ(r.pebbles, 21u);
  EXPECT_EQ(r.state_payload_bytes, 672u);
  EXPECT_LE(r.max_sign_hashes, 20u);
  EXPECT_EQ(r.verify_walk_hashes, 1u);
  EXPECT_EQ(r.verify_binding_hashes, 1u);
  EXPECT_EQ(r.signature_bytes, 64u);
}

TEST(Bench, SmallChainStaysWithinBudget) {
  auto r = bench_chainsig(16, 16, 256, 9);
  EXPECT_LE(r.pebbles, bbox::testing::ceil_log2(16) + 1);
  EXPECT_LE(r.max_sign_hashes, bbox::testing::ceil_log2(16));
  EXPECT_EQ(r.keygen_hashes, 16u);
  EXPECT_EQ(r.rounds, 16u);
}

TEST(Bench, ValidatesParameters) {
  EXPECT_THROW(bench_chainsig(8, 1), Error);
  EXPECT_THROW(bench_chainsig(100, 1), Error);
  EXPECT_THROW(bench_chainsig(16, 17), Error);
}

TEST(Bench, CsvHeaderMatchesRow) {
  auto header = BenchReport::csv_header();
  auto row = bench_chainsig(16, 4).csv_row();
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(header.rfind("n,lambda,rounds,pebbles,", 0), 0u);
}
