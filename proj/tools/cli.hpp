#pragma once

// Subcommand implementations for the bbox command-line tool. Kept in a header
// so the test suite can drive them in-process.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bbox/bbox.hpp"

namespace bbox::cli {

inline constexpr int kOk = 0;
inline constexpr int kAssertionFailure = 1;
inline constexpr int kConfigError = 2;

namespace detail {

inline unsigned ceil_log2(std::uint64_t n) {
  unsigned k = 0;
  while ((std::uint64_t{1} << k) < n) ++k;
  return k;
}

inline nlohmann::json block_summary(const ledger::Block& b) {
  nlohmann::json j = {{"height", b.height},
                      {"type", std::string(ledger::to_string(b.type))},
                      {"hash", b.hash().hex()},
                      {"prev_hash", b.prev_hash.hex()},
                      {"view", b.quorum.view},
                      {"votes", b.quorum.votes.size()}};
  std::size_t readings = 0, transfers = 0;
  for (const auto& tx : b.transactions) {
    readings += tx.payload.size();
    transfers += tx.transfers.size();
  }
  j["transactions"] = b.transactions.size();
  j["readings"] = readings;
  j["transfers"] = transfers;
  if (b.config) {
    const auto& c = b.config->config;
    j["config"] = {{"epoch", c.epoch},
                   {"msp", c.msp_pk.hex()},
                   {"orderers", c.orderers.size()},
                   {"local_admins", c.local_admins.size()},
                   {"aggregators", c.aggregators.size()},
                   {"tau", c.policy.tau},
                   {"max_verifications", c.policy.max_verifications},
                   {"delta", c.policy.delta},
                   {"consensus", c.consensus.algorithm},
                   {"signed", b.config->msp_signature.has_value()}};
  }
  return j;
}

inline nlohmann::json block_dump(const ledger::Block& b) {
  auto j = block_summary(b);
  auto keys = [](const std::vector<crypto::PublicKey>& v) {
    auto a = nlohmann::json::array();
    for (const auto& k : v) a.push_back(k.hex());
    return a;
  };
  auto txs = nlohmann::json::array();
  for (const auto& tx : b.transactions) {
    auto payload = nlohmann::json::array();
    for (const auto& r : tx.payload) {
      payload.push_back({{"sensor", r.sensor_pk.hex()},
                         {"message", to_hex(r.message)},
                         {"sigma1", r.signature.sigma1.hex()},
                         {"sigma2", r.signature.sigma2.hex()}});
    }
    auto transfers = nlohmann::json::array();
    for (const auto& t : tx.transfers) {
      transfers.push_back(
          {{"sensor", t.sensor_pk.hex()}, {"recipient", t.recipient.hex()}, {"sealed_bytes", t.sealed_state.size()}});
    }
    auto endorsers = nlohmann::json::array();
    for (const auto& e : tx.endorsements) endorsers.push_back(e.endorser.hex());
    txs.push_back({{"nonce", to_hex(tx.nonce)},
                   {"submitter", tx.submitter.hex()},
                   {"endorsers", endorsers},
                   {"payload", payload},
                   {"transfers", transfers}});
  }
  j["transactions"] = txs;
  if (b.config) {
    const auto& c = b.config->config;
    j["config"]["orderers"] = keys(c.orderers);
    j["config"]["local_admins"] = keys(c.local_admins);
    j["config"]["aggregators"] = keys(c.aggregators);
  }
  auto votes = nlohmann::json::array();
  for (const auto& v : b.quorum.votes) votes.push_back(v.orderer.hex());
  j["votes"] = votes;
  return j;
}

}  // namespace detail

struct RunOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> orderers;
  std::optional<std::size_t> byzantine;
  std::string byzantine_mode = "equivocate";
  std::optional<std::uint32_t> tau;
  std::optional<std::uint64_t> max_verifications;
  std::optional<std::uint64_t> n;
  std::optional<unsigned> lambda;
};

inline scenario::ScenarioConfig apply_overrides(scenario::ScenarioConfig c, const RunOptions& o) {
  if (o.orderers) c.orderers = *o.orderers;
  if (o.byzantine) {
    c.byzantine.clear();
    auto mode = consensus::parse_byzantine_mode(o.byzantine_mode);
    for (std::size_t i = 0; i < *o.byzantine; ++i) c.byzantine.push_back({i, mode});
  }
  if (o.tau) c.policy.tau = *o.tau;
  if (o.max_verifications) c.policy.max_verifications = *o.max_verifications;
  if (o.n) c.chain_length = *o.n;
  if (o.lambda) c.lambda = *o.lambda;
  return c;
}

inline int cmd_run(const RunOptions& o, std::ostream& out) {
  auto config = o.scenario.empty() ? scenario::ScenarioConfig{} : scenario::ScenarioConfig::load(o.scenario);
  config = apply_overrides(std::move(config), o);
  scenario::Scenario s(config, o.seed);
  auto r = s.run();
  if (!o.out_dir.empty()) s.write_outputs(o.out_dir);
  auto j = r.to_json();
  j.erase("sensors");
  j["honest_fraction"] = r.honest_fraction();
  out << j.dump(2) << "\n";
  bool failed = r.consistency_violations > 0 || r.unaudited_mutations > 0 || r.oracle_failures > 0;
  return failed ? kAssertionFailure : kOk;
}

inline int cmd_bench(std::uint64_t n, std::uint64_t rounds, unsigned lambda, std::uint64_t seed, std::ostream& out) {
  auto r = analysis::bench_chainsig(n, rounds, lambda, seed);
  out << analysis::BenchReport::csv_header() << "\n" << r.csv_row() << "\n";
  bool ok = r.max_sign_hashes <= detail::ceil_log2(n) && (rounds == 0 || (r.verify_walk_hashes == 1 && r.verify_binding_hashes == 1));
  return ok ? kOk : kAssertionFailure;
}

inline int cmd_crossover(const analysis::CostModel& m, std::uint64_t max_gap, std::uint64_t step,
                         const std::string& csv_path, std::ostream& out) {
  auto g = analysis::crossover(m);
  out << "g_star=" << (g ? std::to_string(*g) : std::string("unbounded")) << "\n";
  if (!csv_path.empty()) {
    std::uint64_t limit = max_gap ? max_gap : (g ? 2 * *g : 10000);
    std::ofstream f(csv_path);
    if (!f) throw Error(ErrorCode::Config, "cannot open " + csv_path);
    f << analysis::crossover_csv(m, limit, step);
  }
  return kOk;
}

inline int cmd_collide(unsigned n, unsigned lambda, bool sweep, std::ostream& out) {
  if (sweep) {
    out << analysis::collision_csv(1, 64, {64, 128, 256});
    return kOk;
  }
  auto p = analysis::collision_probability(n, lambda);
  auto saved = out.precision(20);
  out << "n=" << n << " lambda=" << lambda << " p=" << p << "\n";
  out.precision(saved);
  return kOk;
}

inline int cmd_inspect_chain(const std::string& path, std::ostream& out) {
  auto chain = ledger::read_chain_file(path);
  out << "height,type,transactions,readings,transfers,view,votes,config\n";
  for (const auto& b : chain) {
    auto j = detail::block_summary(b);
    std::string config;
    if (b.config) {
      const auto& c = b.config->config;
      config = "epoch=" + std::to_string(c.epoch) + " OL=" + std::to_string(c.orderers.size()) +
               " LL=" + std::to_string(c.local_admins.size()) + " PL=" + std::to_string(c.aggregators.size()) +
               " tau=" + std::to_string(c.policy.tau) + " maxv=" + std::to_string(c.policy.max_verifications);
    }
    out << b.height << ',' << ledger::to_string(b.type) << ',' << j["transactions"].get<std::size_t>() << ','
        << j["readings"].get<std::size_t>() << ',' << j["transfers"].get<std::size_t>() << ',' << b.quorum.view << ','
        << b.quorum.votes.size() << ',' << config << "\n";
  }
  if (auto bad = ledger::first_invalid_block(chain)) {
    out << "invalid block at index " << *bad << "\n";
    return kAssertionFailure;
  }
  out << "blocks=" << chain.size() << " valid\n";
  return kOk;
}

inline int cmd_dump_chain(const std::string& path, std::ostream& out) {
  auto chain = ledger::read_chain_file(path);
  auto a = nlohmann::json::array();
  for (const auto& b : chain) a.push_back(detail::block_dump(b));
  out << a.dump(2) << "\n";
  return kOk;
}

inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"bbox: chain-signature IoT ledger simulator and analysis tools"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run a simulated deployment scenario");
  run_cmd->add_option("--scenario", run.scenario, "scenario file (JSON)");
  run_cmd->add_option("--seed", run.seed, "override the scenario seed");
  run_cmd->add_option("--out-dir", run.out_dir, "write trace.csv, log.jsonl, report.json and chain.bin here");
  run_cmd->add_option("--orderers", run.orderers, "number of orderers");
  run_cmd->add_option("--byzantine", run.byzantine, "number of Byzantine orderers (indices 0..K-1)");
  run_cmd->add_option("--byzantine-mode", run.byzantine_mode, "silent, equivocate or invalid");
  run_cmd->add_option("--tau", run.tau, "endorsement threshold");
  run_cmd->add_option("--max-verifications", run.max_verifications, "verifier walk bound");
  run_cmd->add_option("--n", run.n, "sensor chain length");
  run_cmd->add_option("--lambda", run.lambda, "chain hash output bits");

  std::uint64_t bench_n = 65536, bench_rounds = 1000, bench_seed = 1;
  unsigned bench_lambda = 256;
  auto* bench_cmd = app.add_subcommand("bench", "chain signature micro-benchmark (CSV)");
  bench_cmd->add_option("--n", bench_n, "chain length, a power of two in [2^4, 2^26]");
  bench_cmd->add_option("--rounds", bench_rounds, "sign/verify rounds");
  bench_cmd->add_option("--lambda", bench_lambda, "hash output bits");
  bench_cmd->add_option("--seed", bench_seed, "key seed");

  analysis::CostModel model;
  std::uint64_t max_gap = 0, step = 1;
  std::string csv_path;
  auto* cross_cmd = app.add_subcommand("crossover", "gap at which chain verification outweighs a conventional one");
  cross_cmd->add_option("--per-hash", model.per_hash_verify_ms, "per-hash verification cost (ms)");
  cross_cmd->add_option("--conv-verify", model.conventional_verify_ms, "conventional verification cost (ms)");
  cross_cmd->add_option("--conv-sign", model.conventional_sign_ms, "conventional signing cost (ms)");
  cross_cmd->add_option("--csv", csv_path, "write the cost-vs-gap sweep here");
  cross_cmd->add_option("--max-gap", max_gap, "last gap in the sweep (default 2 g*)");
  cross_cmd->add_option("--step", step, "gap step in the sweep");

  unsigned coll_n = 26, coll_lambda = 64;
  bool sweep = false;
  auto* coll_cmd = app.add_subcommand("collide", "hash-chain collision probability");
  coll_cmd->add_option("--n", coll_n, "log2 of the chain length");
  coll_cmd->add_option("--lambda", coll_lambda, "hash output bits (64, 128 or 256)");
  coll_cmd->add_flag("--sweep", sweep, "CSV over n = 1..64 for every lambda");

  std::string chain_path;
  auto* inspect_cmd = app.add_subcommand("inspect-chain", "summarize and validate a chain file");
  inspect_cmd->add_option("chain", chain_path, "chain.bin")->required();
  auto* dump_cmd = app.add_subcommand("dump-chain", "dump a chain file as JSON");
  dump_cmd->add_option("chain", chain_path, "chain.bin")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(run, out);
    if (*bench_cmd) return cmd_bench(bench_n, bench_rounds, bench_lambda, bench_seed, out);
    if (*cross_cmd) return cmd_crossover(model, max_gap, step, csv_path, out);
    if (*coll_cmd) return cmd_collide(coll_n, coll_lambda, sweep, out);
    if (*inspect_cmd) return cmd_inspect_chain(chain_path, out);
    if (*dump_cmd) return cmd_dump_chain(chain_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Config || e.code() == ErrorCode::InvalidParameter ? kConfigError : kAssertionFailure;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace bbox::cli
