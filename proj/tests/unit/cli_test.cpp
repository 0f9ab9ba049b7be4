#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bbox");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = bbox::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

struct CliRun : ::testing::Test {
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() / ("bbox_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
    std::ofstream(dir / "small.json") << R"({"name": "cli", "seed": 4, "rounds": 4,
      "groups": [{"name": "g0", "aggregators": 2, "sensors": 2}]})";
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string scenario() const { return (dir / "small.json").string(); }
};

}  // namespace

TEST(Cli, BenchCsvSchema) {
  auto r = run_cli({"bench", "--n", "1024", "--rounds", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first_line(r.out),
            "n,lambda,rounds,pebbles,state_payload_bytes,state_file_bytes,keygen_hashes,max_sign_hashes,"
            "mean_sign_hashes,verify_walk_hashes,verify_binding_hashes,signature_bytes,keygen_ms,sign_ms,verify_ms");
  EXPECT_EQ(r.out.substr(r.out.find('\n') + 1).rfind("1024,256,32,11,352,", 0), 0u);
}

TEST(Cli, CrossoverPrintsGapAndWritesCsv) {
  auto r = run_cli({"crossover", "--per-hash", "0.0177", "--conv-verify", "42.55"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "g_star=2404\n");
  EXPECT_EQ(run_cli({"crossover", "--conv-verify", "inf"}).out, "g_star=unbounded\n");

  auto path = fs::temp_directory_path() / ("bbox_cross_" + std::to_string(::getpid()) + ".csv");
  r = run_cli({"crossover", "--per-hash", "0.5", "--conv-verify", "2", "--csv", path.string()});
  ASSERT_EQ(r.code, 0);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "gap,walk_length,chain_ms,conventional_ms");
  std::size_t rows = 0;
  while (std::getline(f, line)) ++rows;
  EXPECT_EQ(rows, 9u);  // gaps 0..2 g*
  fs::remove(path);
}

TEST(Cli, CollideSingleAndSweep) {
  auto r = run_cli({"collide"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("n=26 lambda=64 p=0.00012206286040379", 0), 0u) << r.out;
  r = run_cli({"collide", "--sweep"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(first_line(r.out), "n,lambda,p");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 3 * 64);
}

TEST(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--n", "1000"}).code, 2);
  EXPECT_EQ(run_cli({"bench", "--n", "abc"}).code, 2);
  EXPECT_EQ(run_cli({"collide", "--lambda", "100"}).code, 2);
  EXPECT_EQ(run_cli({"crossover", "--per-hash", "0"}).code, 2);
  EXPECT_EQ(run_cli({"run", "--scenario", "/nonexistent/scenario.json"}).code, 2);
  EXPECT_EQ(run_cli({"run", "--tau", "0"}).code, 2);
  EXPECT_EQ(run_cli({"run", "--byzantine", "1", "--byzantine-mode", "sneaky"}).code, 2);
  EXPECT_EQ(run_cli({"inspect-chain"}).code, 2);
}

TEST(Cli, HelpExitsZero) {
  auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("crossover"), std::string::npos);
}

TEST_F(CliRun, RunIsDeterministicAndWritesOutputs) {
  auto out = (dir / "out").string();
  auto a = run_cli({"run", "--scenario", scenario(), "--out-dir", out});
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = run_cli({"run", "--scenario", scenario()});
  EXPECT_EQ(a.out, b.out);
  auto report = nlohmann::json::parse(a.out);
  EXPECT_EQ(report["honest_fraction"].get<double>(), 1.0);
  EXPECT_FALSE(report.contains("sensors"));
  for (const char* f : {"trace.csv", "log.jsonl", "report.json", "chain.bin"}) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;

  std::ifstream trace(dir / "out" / "trace.csv");
  std::string header;
  std::getline(trace, header);
  EXPECT_EQ(header.rfind("event_time,", 0), 0u) << header;

  auto c = run_cli({"run", "--scenario", scenario(), "--seed", "5"});
  EXPECT_EQ(c.code, 0);
  EXPECT_NE(nlohmann::json::parse(c.out)["trace_hash"], report["trace_hash"]);
}

TEST_F(CliRun, InspectAndDumpChain) {
  auto out = (dir / "out").string();
  ASSERT_EQ(run_cli({"run", "--scenario", scenario(), "--out-dir", out}).code, 0);
  auto chain = (dir / "out" / "chain.bin").string();

  auto r = run_cli({"inspect-chain", chain});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first_line(r.out), "height,type,transactions,readings,transfers,view,votes,config");
  EXPECT_NE(r.out.find("\n0,configuration,"), std::string::npos);
  EXPECT_NE(r.out.find(" valid\n"), std::string::npos);

  auto d = run_cli({"dump-chain", chain});
  ASSERT_EQ(d.code, 0);
  auto blocks = nlohmann::json::parse(d.out);
  ASSERT_TRUE(blocks.is_array());
  EXPECT_EQ(blocks[0]["height"], 0);
  EXPECT_TRUE(blocks[0].contains("config"));

  // corrupt one byte near the end: either unparseable or invalid
  std::fstream f(chain, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-40, std::ios::end);
  char byte = 0;
  f.read(&byte, 1);
  f.seekp(-40, std::ios::end);
  byte ^= 0x5a;
  f.write(&byte, 1);
  f.close();
  EXPECT_NE(run_cli({"inspect-chain", chain}).code, 0);
  EXPECT_NE(run_cli({"inspect-chain", (dir / "missing.bin").string()}).code, 0);
}
