#pragma once

// Scenario files, world construction and run reports on top of the simulator.
//
// Actor naming: "orderer:<i>", "aggr:<group>:<i>", "sensor:<group>:<i>" and
// "control" (MSP and local admins, plus the scripted adversary). Link rules in
// the fault plan match these names with shell globs.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbox/consensus.hpp"
#include "bbox/devicegroup.hpp"
#include "bbox/membership.hpp"
#include "bbox/simnet.hpp"

namespace bbox::scenario {

using nlohmann::json;
using net::ActorId;
using net::Time;

struct GroupSpec {
  std::string name;
  std::size_t aggregators = 1;
  std::size_t sensors = 1;
};

struct ByzantineSpec {
  std::size_t orderer = 0;
  consensus::ByzantineMode mode = consensus::ByzantineMode::Silent;
};

struct EventSpec {
  Time at = 0;
  std::string op;
  json args;
};

struct Timing {
  Time sensor_period = devicegroup::kDefaultSensorPeriod;
  Time tx_period = devicegroup::kDefaultSensorPeriod;
  Time view_timeout = 1000;
  Time collect_window = 100;
  Time endorse_timeout = 1000;
  Time resubmit_timeout = 5000;
};

// Required argument names per scripted event.
inline const std::map<std::string, std::vector<std::string>>& event_schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"revoke_sensor", {"group", "sensor"}},
      {"revoke_aggregator", {"group", "aggregator"}},
      {"transfer", {"group", "sensor", "to_group"}},
      {"msp_offline", {}},
      {"msp_online", {}},
      {"policy_update", {}},
      {"forge_group_update", {"group", "signer"}},
      {"unauthorized_aggr_add", {"group", "signer"}},
      {"unauthorized_orderer_add", {}},
      {"unauthorized_sensor_join", {"group"}},
      {"forged_config_update", {}},
      {"rogue_submit", {"signer"}},
      {"rogue_endorse_request", {"signer"}},
  };
  return s;
}

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::uint64_t rounds = 10;
  std::uint64_t chain_length = 0;  // 0: smallest power of two above rounds
  unsigned lambda = 256;
  std::size_t orderers = 4;
  std::vector<ByzantineSpec> byzantine;
  std::vector<GroupSpec> groups{{"g0", 2, 1}};
  ledger::Policy policy{2, 10000, 100, ledger::kDefaultMaxBlockTxs};
  Timing timing;
  Time horizon = 0;  // 0: derived from rounds plus a drain period
  simnet::FaultPlan faults;
  std::vector<EventSpec> events;

  std::uint64_t effective_chain_length() const {
    if (chain_length) return chain_length;
    std::uint64_t n = 16;
    while (n <= rounds) n <<= 1;
    return n;
  }

  Time sensor_start() const { return 1; }
  Time effective_horizon() const {
    if (horizon) return horizon;
    return sensor_start() + rounds * timing.sensor_period + 3 * timing.tx_period + timing.resubmit_timeout +
           20 * timing.view_timeout;
  }

  std::size_t total_aggregators() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.aggregators;
    return n;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
    if (groups.empty()) fail("at least one group is required");
    if (orderers == 0) fail("at least one orderer is required");
    if (lambda != 64 && lambda != 128 && lambda != 256) fail("lambda must be 64, 128 or 256");
    std::set<std::string> names;
    for (const auto& g : groups) {
      if (g.name.empty() || g.name.find(':') != std::string::npos) fail("bad group name '" + g.name + "'");
      if (!names.insert(g.name).second) fail("duplicate group '" + g.name + "'");
      if (g.aggregators == 0) fail("group " + g.name + " needs an aggregator");
    }
    std::set<std::size_t> seen;
    for (const auto& b : byzantine) {
      if (b.orderer >= orderers) fail("byzantine orderer index out of range");
      if (!seen.insert(b.orderer).second) fail("orderer assigned twice in byzantine list");
    }
    if (policy.tau == 0 || policy.tau > total_aggregators()) fail("tau must be in [1, |PL|]");
    if (rounds >= effective_chain_length()) fail("chain_length must exceed rounds");
    if (faults.latency_min > faults.latency_max) fail("latency_min > latency_max");
    if (timing.sensor_period == 0 || timing.tx_period == 0 || timing.view_timeout == 0) fail("periods must be positive");
    for (const auto& r : faults.loss) {
      if (r.probability < 0 || r.probability > 1) fail("loss probability out of [0, 1]");
    }
    for (const auto& e : events) {
      auto it = event_schema().find(e.op);
      if (it == event_schema().end()) fail("unknown event op '" + e.op + "'");
      for (const auto& k : it->second) {
        if (!e.args.contains(k)) fail("event " + e.op + " needs '" + k + "'");
      }
    }
  }

  static ScenarioConfig from_json(const json& j);
  static ScenarioConfig load(const std::filesystem::path& path);
};

namespace detail {

inline void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::Config, std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == k;
    if (!ok) throw Error(ErrorCode::Config, "unknown key '" + k + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw Error(ErrorCode::Config, std::string(key) + " must be a string");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw Error(ErrorCode::Config, std::string(key) + " must be a number");
  } else {
    if (!v.is_number_unsigned()) throw Error(ErrorCode::Config, std::string(key) + " must be a non-negative integer");
  }
  out = v.get<T>();
}

inline simnet::LinkRule read_link(const json& j) {
  simnet::LinkRule l;
  read(j, "from", l.from);
  read(j, "to", l.to);
  return l;
}

}  // namespace detail

inline ScenarioConfig ScenarioConfig::from_json(const json& j) {
  using detail::read;
  ScenarioConfig c;
  try {
    detail::check_keys(j, "scenario",
                       {"name", "seed", "rounds", "chain_length", "lambda", "orderers", "byzantine", "byzantine_mode",
                        "groups", "policy", "timing", "horizon", "faults", "events"});
    read(j, "name", c.name);
    read(j, "seed", c.seed);
    read(j, "rounds", c.rounds);
    read(j, "chain_length", c.chain_length);
    read(j, "lambda", c.lambda);
    read(j, "orderers", c.orderers);
    read(j, "horizon", c.horizon);
    if (j.contains("byzantine")) {
      const auto& b = j.at("byzantine");
      if (b.is_number_unsigned()) {
        std::string mode = "silent";
        read(j, "byzantine_mode", mode);
        for (std::size_t i = 0; i < b.get<std::size_t>(); ++i)
          c.byzantine.push_back({i, consensus::parse_byzantine_mode(mode)});
      } else if (b.is_array()) {
        for (const auto& e : b) {
          detail::check_keys(e, "byzantine entry", {"orderer", "mode"});
          ByzantineSpec s;
          std::string mode = "silent";
          read(e, "orderer", s.orderer);
          read(e, "mode", mode);
          s.mode = consensus::parse_byzantine_mode(mode);
          c.byzantine.push_back(s);
        }
      } else {
        throw Error(ErrorCode::Config, "byzantine must be a count or a list");
      }
    }
    if (j.contains("groups")) {
      if (!j.at("groups").is_array()) throw Error(ErrorCode::Config, "groups must be a list");
      c.groups.clear();
      for (const auto& g : j.at("groups")) {
        detail::check_keys(g, "group", {"name", "aggregators", "sensors"});
        GroupSpec s;
        s.name = "g" + std::to_string(c.groups.size());
        read(g, "name", s.name);
        read(g, "aggregators", s.aggregators);
        read(g, "sensors", s.sensors);
        c.groups.push_back(s);
      }
    }
    bool delta_set = false;
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      detail::check_keys(p, "policy", {"tau", "max_verifications", "delta", "max_block_txs"});
      read(p, "tau", c.policy.tau);
      read(p, "max_verifications", c.policy.max_verifications);
      read(p, "max_block_txs", c.policy.max_block_txs);
      read(p, "delta", c.policy.delta);
      delta_set = p.contains("delta");
    }
    if (j.contains("timing")) {
      const auto& t = j.at("timing");
      detail::check_keys(t, "timing",
                         {"sensor_period", "tx_period", "view_timeout", "collect_window", "endorse_timeout",
                          "resubmit_timeout"});
      read(t, "sensor_period", c.timing.sensor_period);
      c.timing.tx_period = c.timing.sensor_period;
      read(t, "tx_period", c.timing.tx_period);
      read(t, "view_timeout", c.timing.view_timeout);
      read(t, "collect_window", c.timing.collect_window);
      read(t, "endorse_timeout", c.timing.endorse_timeout);
      read(t, "resubmit_timeout", c.timing.resubmit_timeout);
    }
    if (j.contains("faults")) {
      const auto& f = j.at("faults");
      detail::check_keys(f, "faults", {"latency_min", "latency_max", "loss", "outages", "tamper"});
      read(f, "latency_min", c.faults.latency_min);
      read(f, "latency_max", c.faults.latency_max);
      for (const auto& l : f.value("loss", json::array())) {
        detail::check_keys(l, "loss rule", {"from", "to", "p"});
        simnet::LossRule r{detail::read_link(l), 0};
        read(l, "p", r.probability);
        c.faults.loss.push_back(r);
      }
      for (const auto& o : f.value("outages", json::array())) {
        detail::check_keys(o, "outage", {"from", "to", "start", "end", "rounds"});
        simnet::Outage r{detail::read_link(o), 0, 0};
        read(o, "start", r.start);
        read(o, "end", r.end);
        if (o.contains("rounds")) {
          std::uint64_t g = 0;
          read(o, "rounds", g);
          r.end = r.start + g * c.timing.sensor_period;
        }
        if (r.end < r.start) throw Error(ErrorCode::Config, "outage ends before it starts");
        c.faults.outages.push_back(r);
      }
      for (const auto& t : f.value("tamper", json::array())) {
        detail::check_keys(t, "tamper rule", {"from", "to", "mode", "first_round", "last_round", "suffix"});
        simnet::TamperRule r;
        r.link = detail::read_link(t);
        std::string mode = "rewrite";
        read(t, "mode", mode);
        r.mode = simnet::parse_tamper_mode(mode);
        read(t, "first_round", r.first_round);
        read(t, "last_round", r.last_round);
        read(t, "suffix", r.suffix);
        if (r.suffix.empty()) throw Error(ErrorCode::Config, "tamper suffix must not be empty");
        c.faults.tamper.push_back(r);
      }
    }
    if (!delta_set) c.policy.delta = 2 * c.faults.latency_max;
    if (j.contains("events")) {
      if (!j.at("events").is_array()) throw Error(ErrorCode::Config, "events must be a list");
      for (const auto& e : j.at("events")) {
        if (!e.is_object() || !e.contains("op")) throw Error(ErrorCode::Config, "event needs an op");
        EventSpec s;
        read(e, "at", s.at);
        read(e, "op", s.op);
        s.args = e;
        c.events.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

inline ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, "scenario " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

inline crypto::SigningKey derive_key(std::uint64_t seed, std::string_view name) {
  ByteWriter w;
  w.str("bbox/sim-key").u64(seed).str(name);
  return crypto::SigningKey::from_seed(w.bytes());
}

inline Bytes derive_chain_seed(std::uint64_t seed, std::string_view name, unsigned lambda) {
  ByteWriter w;
  w.str("bbox/sim-chain").u64(seed).str(name);
  auto d = sha256(w.bytes());
  return Bytes(d.bytes().begin(), d.bytes().begin() + lambda / 8);
}

inline std::string orderer_name(std::size_t i) { return "orderer:" + std::to_string(i); }
inline std::string aggregator_name(const std::string& g, std::size_t i) { return "aggr:" + g + ":" + std::to_string(i); }
inline std::string sensor_name(const std::string& g, std::size_t i) { return "sensor:" + g + ":" + std::to_string(i); }

inline constexpr std::uint32_t kScriptEvent = 21;

// MSP, local admins and the scripted adversary. Keeps a ledger replica fed by
// the orderers so that configuration updates build on the latest epoch.
class ControlActor : public net::Actor {
 public:
  ControlActor(simnet::Simulator* sim, std::uint64_t seed, membership::Msp msp,
               std::map<std::string, membership::LocalAdmin> admins, ledger::Ledger replica,
               std::vector<EventSpec> events, const membership::OperatorOracle* oracle)
      : sim_(sim),
        seed_(seed),
        msp_(std::move(msp)),
        admins_(std::move(admins)),
        ledger_(std::move(replica)),
        events_(std::move(events)),
        oracle_(oracle) {}

  const ledger::Ledger* replica() const override { return &ledger_; }
  const ledger::Ledger& ledger() const { return ledger_; }
  membership::Msp& msp() { return msp_; }
  membership::LocalAdmin& admin(const std::string& group) { return admins_.at(group); }
  const std::map<std::string, Time>& revoked_sensors() const { return revoked_sensors_; }
  const std::map<std::string, Time>& revoked_aggregators() const { return revoked_aggregators_; }
  const std::map<std::string, Time>& transfers() const { return transfers_; }

  void on_start(net::Context& ctx) override {
    for (std::size_t i = 0; i < events_.size(); ++i) ctx.schedule(events_[i].at, {kScriptEvent, i, 0});
  }

  void on_message(net::Context& ctx, ActorId, const net::Message& msg) override {
    if (const auto* t = std::get_if<net::Timer>(&msg); t && t->kind == kScriptEvent) {
      run_event(ctx, events_.at(t->a));
      return;
    }
    const auto* m = std::get_if<net::ConsensusMsg>(&msg);
    if (!m || m->kind != net::ConsensusKind::BlockDeliver || !m->block) return;
    if (m->block->height > ledger_.height()) {
      future_.emplace(m->block->height, *m->block);
      return;
    }
    if (m->block->height < ledger_.height() || !ledger_.check(*m->block)) return;
    ledger_.append_unchecked(*m->block);
    for (auto it = future_.begin(); it != future_.end() && it->first <= ledger_.height();) {
      if (it->first == ledger_.height() && ledger_.check(it->second)) ledger_.append_unchecked(it->second);
      it = future_.erase(it);
    }
  }

 private:
  ActorId id(const std::string& name) const {
    auto id = sim_->find(name);
    if (!id) throw Error(ErrorCode::Config, "no actor named " + name);
    return *id;
  }

  std::vector<ActorId> group_aggregators(const std::string& group) const {
    std::vector<ActorId> out;
    for (std::size_t i = 0;; ++i) {
      auto id = sim_->find(aggregator_name(group, i));
      if (!id) return out;
      out.push_back(*id);
    }
  }

  HashDigest sensor_pk(const std::string& group, std::size_t i) {
    return sim_->actor_as<devicegroup::SensorActor>(id(sensor_name(group, i))).public_key();
  }

  void push_group(net::Context& ctx, const std::string& group, const membership::GroupUpdate& u,
                  std::optional<ActorId> skip = std::nullopt) {
    for (auto a : group_aggregators(group)) {
      if (a != skip) ctx.send(a, net::GroupPush{u});
    }
  }

  void submit_config(net::Context& ctx, const ledger::ConfigUpdate& u) {
    for (std::size_t i = 0;; ++i) {
      auto o = sim_->find(orderer_name(i));
      if (!o) break;
      ctx.send(*o, net::ConfigSubmit{u});
    }
  }

  void report(net::Context& ctx, const EventSpec& e, const Status& s) {
    ctx.trace(e.op, 0, 0, s ? "ok" : std::string(to_string(s.code())));
    ctx.log({{"event", "script"}, {"op", e.op}, {"result", std::string(to_string(s.code()))}, {"detail", s.detail()}});
  }

  Status publish_config(net::Context& ctx) {
    auto u = msp_.config_update(ledger_);
    if (!u) return u.status();
    submit_config(ctx, u.value());
    return Status::ok();
  }

  void run_event(net::Context& ctx, const EventSpec& e) {
    const auto& a = e.args;
    auto str = [&](const char* k) { return a.at(k).get<std::string>(); };
    auto num = [&](const char* k, std::size_t d = 0) { return a.contains(k) ? a.at(k).get<std::size_t>() : d; };
    Status s;
    try {
      if (e.op == "msp_offline" || e.op == "msp_online") {
        msp_.set_online(e.op == "msp_online");
      } else if (e.op == "revoke_sensor") {
        auto g = str("group");
        auto pk = sensor_pk(g, num("sensor"));
        auto u = admins_.at(g).agg_revoke_sensor(pk);
        s = u.status();
        if (u) {
          push_group(ctx, g, u.value());
          revoked_sensors_[sensor_name(g, num("sensor"))] = ctx.now();
        }
      } else if (e.op == "revoke_aggregator") {
        auto g = str("group");
        auto name = aggregator_name(g, num("aggregator"));
        auto pk = derive_key(seed_, name).public_key();
        auto r = admins_.at(g).group_revoke(pk);
        s = r.status();
        if (r) {
          push_group(ctx, g, r.value().update);
          s = msp_.node_revoke(ledger_, membership::Role::Aggregator, pk, r.value().request);
          if (s) s = publish_config(ctx);
          if (s) revoked_aggregators_[name] = ctx.now();
        }
      } else if (e.op == "policy_update") {
        auto p = ledger_.config().policy;
        if (a.contains("tau")) p.tau = a.at("tau").get<std::size_t>();
        if (a.contains("max_verifications")) p.max_verifications = a.at("max_verifications").get<std::uint64_t>();
        s = msp_.policy_update(p);
        if (s) s = publish_config(ctx);
      } else if (e.op == "transfer") {
        s = transfer(ctx, str("group"), num("sensor"), str("to_group"), num("to_aggregator"));
      } else {
        s = adversary(ctx, e);
      }
    } catch (const Error& err) {
      s = Status(err.code(), err.what());
    }
    report(ctx, e, s);
  }

  Status transfer(net::Context& ctx, const std::string& g, std::size_t idx, const std::string& to_group,
                  std::size_t to_aggr) {
    auto pk = sensor_pk(g, idx);
    auto src_aggrs = group_aggregators(g);
    auto dst_aggrs = group_aggregators(to_group);
    if (src_aggrs.empty() || to_aggr >= dst_aggrs.size()) return Status(ErrorCode::Config, "bad transfer endpoints");
    // the source aggregator that currently answers for the sensor seals its verifier state
    std::optional<ActorId> responsible;
    for (auto id : src_aggrs) {
      if (sim_->actor_as<devicegroup::AggregatorActor>(id).responsible_for(pk)) responsible = id;
    }
    if (!responsible) return Status(ErrorCode::TransferFailed, "no responsible aggregator");
    auto released = admins_.at(g).release_sensor(pk);
    if (!released) return released.status();
    auto admitted = admins_.at(to_group).admit_sensor(pk);
    if (!admitted) return admitted.status();

    net::TransferOrder order{g, pk, derive_key(seed_, aggregator_name(to_group, to_aggr)).public_key(), {}, {}};
    order.sign(admin_key(g));
    ctx.send(*responsible, order);
    push_group(ctx, g, released.value(), responsible);
    sim_->set_radio(id(sensor_name(g, idx)), dst_aggrs);
    transfers_[sensor_name(g, idx)] = ctx.now();
    return Status::ok();
  }

  crypto::SigningKey admin_key(const std::string& group) const { return derive_key(seed_, "admin:" + group); }

  crypto::SigningKey signer_key(const std::string& who) const {
    // "admin:<group>", an actor name, or anything else for an unregistered outsider
    return derive_key(seed_, who);
  }

  Status adversary(net::Context& ctx, const EventSpec& e) {
    const auto& a = e.args;
    auto str = [&](const char* k, std::string d = {}) { return a.contains(k) ? a.at(k).get<std::string>() : d; };
    if (e.op == "forge_group_update") {
      // a GroupUpdate for `group` signed by someone other than its admin
      auto g = str("group");
      auto key = signer_key(str("signer"));
      membership::GroupUpdate u;
      u.group = g;
      u.sequence = 1u << 30;
      auto op = str("operation", "remove_sensor");
      u.op = op == "add_sensor"       ? membership::GroupOp::AddSensor
             : op == "set_aggregators" ? membership::GroupOp::SetAggregators
                                       : membership::GroupOp::RemoveSensor;
      u.sensor = sensor_pk(g, 0);
      if (u.op == membership::GroupOp::AddSensor) u.sensor = sha256(as_bytes("rogue-sensor"));
      if (u.op == membership::GroupOp::SetAggregators) u.aggregators = {key.public_key()};
      // claim the real admin identity but sign with the attacker's key, or sign openly
      u.admin = str("claim") == "admin" ? admin_key(g).public_key() : key.public_key();
      u.signature = key.sign(u.signing_bytes());
      push_group(ctx, g, u);
      return Status::ok();
    }
    if (e.op == "unauthorized_aggr_add") {
      auto g = str("group");
      auto key = signer_key(str("signer"));
      auto candidate = derive_key(seed_, "rogue-aggregator:" + str("signer")).public_key();
      membership::AggrAddRequest req{g, candidate, key.public_key(), {}};
      req.signature = key.sign(membership::AggrAddRequest::signing_bytes(g, candidate, key.public_key()));
      auto pi = oracle_->issue(candidate);
      auto s = msp_.aggr_add(ledger_, pi, req);
      if (s) return Status(ErrorCode::Ok, "accepted");
      return s;
    }
    if (e.op == "unauthorized_orderer_add") {
      auto candidate = derive_key(seed_, "rogue-orderer").public_key();
      return msp_.orderer_add(ledger_, membership::IdentityProof{candidate, "forged"}, candidate);
    }
    if (e.op == "unauthorized_sensor_join") {
      membership::LocalAdmin rogue(signer_key(str("signer", "outsider")), str("group"));
      auto seed = derive_chain_seed(seed_, "rogue-sensor", 256);
      auto j = rogue.sensor_join(ledger_, 16, seed);
      if (!j) return j.status();
      // a key on LL passes the local check; the group's aggregators still have to accept the push
      push_group(ctx, str("group"), j.value().update);
      return Status::ok();
    }
    if (e.op == "forged_config_update") {
      auto cfg = ledger_.config();
      cfg.epoch += 1;
      cfg.aggregators.push_back(derive_key(seed_, "rogue-aggregator").public_key());
      auto u = ledger::ConfigUpdate::sign(cfg, signer_key(str("signer", "outsider")));
      submit_config(ctx, u);
      return Status::ok();
    }
    if (e.op == "rogue_submit" || e.op == "rogue_endorse_request") {
      auto key = signer_key(str("signer"));
      ledger::Transaction tx;
      tx.payload.push_back({sha256(as_bytes("rogue-sensor")), Bytes{'x'}, {}});
      tx.payload.back().signature.sigma1 = sha256(as_bytes("s1"));
      tx.payload.back().signature.sigma2 = sha256(as_bytes("s2"));
      tx.nonce.resize(ledger::kNonceBytes);
      for (auto& b : tx.nonce) b = static_cast<std::uint8_t>(ctx.rng()());
      tx.submitter = key.public_key();
      tx.endorsements.push_back({key.public_key(), tx.endorse(key)});
      for (const auto& extra : a.value("endorsers", std::vector<std::string>{})) {
        auto k = signer_key(extra);
        tx.endorsements.push_back({k.public_key(), tx.endorse(k)});
      }
      if (e.op == "rogue_submit") {
        for (const auto& o : ledger_.config().orderers) {
          if (auto to = ctx.address_of(o)) ctx.send(*to, net::TxSubmit{tx});
        }
      } else {
        for (const auto& p : ledger_.config().aggregators) {
          if (auto to = ctx.address_of(p)) ctx.send(*to, net::EndorseRequest{tx});
        }
      }
      rogue_nonces_.push_back(tx.nonce);
      return Status::ok();
    }
    return Status(ErrorCode::Config, "unhandled op " + e.op);
  }

  simnet::Simulator* sim_;
  std::uint64_t seed_;
  membership::Msp msp_;
  std::map<std::string, membership::LocalAdmin> admins_;
  ledger::Ledger ledger_;
  std::vector<EventSpec> events_;
  const membership::OperatorOracle* oracle_;
  std::map<std::uint64_t, ledger::Block> future_;
  std::map<std::string, Time> revoked_sensors_;
  std::map<std::string, Time> revoked_aggregators_;
  std::map<std::string, Time> transfers_;
  std::vector<Bytes> rogue_nonces_;
};

struct SensorSummary {
  std::string name;
  std::uint64_t sent = 0;
  std::uint64_t committed = 0;
  std::uint64_t forged = 0;      // committed payloads the sensor never signed
  std::uint64_t duplicates = 0;  // the same reading committed twice
  bool honest = true;            // never tampered, revoked or transferred
};

struct TraceReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string trace_hash;
  std::uint64_t events = 0;
  Time end_time = 0;
  std::uint64_t height = 0;
  std::uint64_t readings_sent = 0;
  std::uint64_t readings_committed = 0;
  std::uint64_t honest_sent = 0;
  std::uint64_t honest_committed = 0;
  std::uint64_t forged_committed = 0;
  std::uint64_t duplicate_commits = 0;
  std::uint64_t oracle_failures = 0;  // committed readings that fail an independent chain replay
  std::uint64_t alarms = 0;
  std::uint64_t tx_stalled = 0;
  std::uint64_t mutations = 0;
  std::uint64_t unaudited_mutations = 0;
  std::uint64_t consistency_violations = 0;
  std::uint64_t uncommitted_endorsed = 0;
  std::uint64_t dropped = 0;
  Time max_commit_latency = 0;
  std::uint64_t max_commit_rounds = 0;  // latency in view-timeout units
  std::vector<SensorSummary> sensors;
  std::map<std::string, std::string> group_state;  // digest of every aggregator's AL and CL

  double honest_fraction() const {
    return honest_sent ? static_cast<double>(honest_committed) / static_cast<double>(honest_sent) : 1.0;
  }

  json to_json() const {
    json s = json::array();
    for (const auto& x : sensors) {
      s.push_back({{"name", x.name}, {"sent", x.sent}, {"committed", x.committed}, {"forged", x.forged},
                   {"duplicates", x.duplicates}, {"honest", x.honest}});
    }
    return {{"scenario", scenario},
            {"seed", seed},
            {"trace_hash", trace_hash},
            {"events", events},
            {"end_time", end_time},
            {"height", height},
            {"readings_sent", readings_sent},
            {"readings_committed", readings_committed},
            {"honest_sent", honest_sent},
            {"honest_committed", honest_committed},
            {"forged_committed", forged_committed},
            {"duplicate_commits", duplicate_commits},
            {"oracle_failures", oracle_failures},
            {"alarms", alarms},
            {"tx_stalled", tx_stalled},
            {"mutations", mutations},
            {"unaudited_mutations", unaudited_mutations},
            {"consistency_violations", consistency_violations},
            {"uncommitted_endorsed", uncommitted_endorsed},
            {"dropped", dropped},
            {"max_commit_latency", max_commit_latency},
            {"max_commit_rounds", max_commit_rounds},
            {"group_state", group_state},
            {"sensors", s}};
  }
};

class Scenario {
 public:
  explicit Scenario(ScenarioConfig config, std::optional<std::uint64_t> seed = std::nullopt)
      : config_(std::move(config)), seed_(seed.value_or(config_.seed)), sim_(seed_) {
    config_.validate();
    build();
  }

  const ScenarioConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  simnet::Simulator& sim() { return sim_; }
  const simnet::Simulator& sim() const { return sim_; }

  ActorId id(const std::string& name) const {
    auto id = sim_.find(name);
    if (!id) throw Error(ErrorCode::NotFound, "no actor named " + name);
    return *id;
  }
  devicegroup::AggregatorActor& aggregator(const std::string& g, std::size_t i) {
    return sim_.actor_as<devicegroup::AggregatorActor>(id(aggregator_name(g, i)));
  }
  devicegroup::SensorActor& sensor(const std::string& g, std::size_t i) {
    return sim_.actor_as<devicegroup::SensorActor>(id(sensor_name(g, i)));
  }
  consensus::OrdererActor& orderer(std::size_t i) { return sim_.actor_as<consensus::OrdererActor>(id(orderer_name(i))); }
  ControlActor& control() { return sim_.actor_as<ControlActor>(id("control")); }
  const ledger::Block& genesis() const { return genesis_; }
  crypto::SigningKey key(const std::string& name) const { return derive_key(seed_, name); }

  // The longest honest orderer chain.
  const ledger::Ledger& reference_chain() {
    const ledger::Ledger* best = nullptr;
    for (std::size_t i = 0; i < config_.orderers; ++i) {
      const auto* l = orderer(i).replica();
      if (l && (!best || l->height() > best->height())) best = l;
    }
    if (!best) best = &control().ledger();
    return *best;
  }

  std::uint64_t run_until(Time t) { return sim_.run_until(t); }

  TraceReport run() {
    sim_.run_until(config_.effective_horizon());
    return report();
  }

  TraceReport report() {
    TraceReport r;
    r.scenario = config_.name;
    r.seed = seed_;
    r.events = sim_.events();
    r.end_time = sim_.now();
    const auto& chain = reference_chain();
    r.height = chain.height();
    r.consistency_violations = sim_.consistency_violations();
    r.dropped = sim_.dropped();
    r.mutations = sim_.mutations().size();
    for (const auto& m : sim_.mutations()) {
      if (!sim_.faults().tamper_rule(m.from, m.to, m.round)) ++r.unaudited_mutations;
    }
    std::set<std::string> mutated;
    for (const auto& m : sim_.mutations()) mutated.insert(m.from);

    // committed readings, per sensor, in chain order
    std::map<HashDigest, std::vector<const ledger::SensorReading*>> committed;
    for (const auto& b : chain.blocks()) {
      for (const auto& tx : b.transactions) {
        for (const auto& p : tx.payload) committed[p.sensor_pk].push_back(&p);
      }
    }
    const auto& ctl = control();
    for (const auto& g : config_.groups) {
      for (std::size_t i = 0; i < g.sensors; ++i) {
        auto& s = sensor(g.name, i);
        SensorSummary sum;
        sum.name = s.name();
        sum.sent = s.sent().size();
        sum.honest = !mutated.contains(s.name()) && !ctl.revoked_sensors().contains(s.name()) &&
                     !ctl.transfers().contains(s.name());
        std::map<Bytes, std::size_t> index;
        for (std::size_t k = 0; k < s.sent().size(); ++k) index[s.sent()[k]] = k;
        std::set<std::size_t> rounds;
        std::vector<const ledger::SensorReading*> own;
        for (const auto* p : committed[s.public_key()]) {
          auto it = index.find(p->message);
          if (it == index.end()) {
            ++sum.forged;
            continue;
          }
          if (!rounds.insert(it->second).second) {
            ++sum.duplicates;
            continue;
          }
          own.push_back(p);
        }
        sum.committed = rounds.size();
        r.oracle_failures += replay_oracle(s.public_key(), own, index);
        r.readings_sent += sum.sent;
        r.readings_committed += sum.committed;
        r.forged_committed += sum.forged;
        r.duplicate_commits += sum.duplicates;
        if (sum.honest) {
          r.honest_sent += sum.sent;
          r.honest_committed += sum.committed;
        }
        r.sensors.push_back(sum);
      }
      json state = json::array();
      for (std::size_t i = 0; i < g.aggregators; ++i) {
        auto& a = aggregator(g.name, i);
        json al = json::array();
        for (const auto& pk : a.group_aggregators()) al.push_back(pk.hex());
        json cl = json::array();
        for (const auto& [pk, e] : a.cl()) cl.push_back(pk.hex());
        state.push_back({{"al", al}, {"cl", cl}});
        if (a.ledger().config().is_aggregator(a.public_key())) r.uncommitted_endorsed += a.txset_size();
      }
      r.group_state[g.name] = sha256(as_bytes(state.dump())).hex();
    }
    for (const auto& e : sim_.log()) {
      const auto& ev = e.at("event");
      if (ev == "alarm") ++r.alarms;
      if (ev == "tx_stalled") ++r.tx_stalled;
      if (ev == "tx_committed") r.max_commit_latency = std::max<Time>(r.max_commit_latency, e.at("latency").get<Time>());
    }
    r.max_commit_rounds = (r.max_commit_latency + config_.timing.view_timeout - 1) / config_.timing.view_timeout;

    ByteWriter h;
    h.str(sim_.trace_csv()).str(sim_.log_jsonl());
    for (const auto& b : chain.blocks()) h.blob(b.encode());
    r.trace_hash = sha256(h.bytes()).hex();
    return r;
  }

  void write_outputs(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto r = report();
    std::ofstream(dir / "trace.csv") << sim_.trace_csv();
    std::ofstream(dir / "log.jsonl") << sim_.log_jsonl();
    std::ofstream(dir / "report.json") << r.to_json().dump(2) << "\n";
    ledger::write_chain_file(dir / "chain.bin", reference_chain().blocks());
  }

 private:
  // Replays a sensor's committed readings from its registered public key,
  // walking the hash chain without any step bound.
  std::uint64_t replay_oracle(const HashDigest& pk, const std::vector<const ledger::SensorReading*>& readings,
                              const std::map<Bytes, std::size_t>& index) const {
    std::vector<std::pair<std::size_t, const ledger::SensorReading*>> ordered;
    for (const auto* p : readings) ordered.emplace_back(index.at(p->message), p);
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    ChainHash h(static_cast<unsigned>(pk.size() * 8));
    HashDigest anchor = pk;
    std::size_t anchor_round = 0;  // chain index of the anchor
    std::uint64_t failures = 0;
    for (const auto& [round, p] : ordered) {
      // key for round r is k_{r+1}; walking it r+1-anchor_round times must reach the anchor
      HashDigest k = p->signature.sigma2;
      HashDigest prev;
      for (std::size_t j = anchor_round; j < round + 1; ++j) {
        k = h(k);
        if (j == anchor_round) prev = k;
      }
      bool ok = k == anchor && chainsig::bind_message(h, p->message, prev) == p->signature.sigma1;
      if (!ok) {
        ++failures;
        continue;
      }
      anchor = p->signature.sigma2;
      anchor_round = round + 1;
    }
    return failures;
  }

  void build() {
    const auto& c = config_;
    oracle_ = std::make_unique<membership::OperatorOracle>();
    auto msp_key = key("msp");

    std::vector<crypto::SigningKey> orderer_keys;
    for (std::size_t i = 0; i < c.orderers; ++i) orderer_keys.push_back(key(orderer_name(i)));
    ledger::SystemConfig sc;
    sc.msp_pk = msp_key.public_key();
    sc.consensus.view_timeout = c.timing.view_timeout;
    for (const auto& k : orderer_keys) sc.orderers.push_back(k.public_key());
    std::map<std::string, std::vector<crypto::SigningKey>> aggr_keys;
    for (const auto& g : c.groups) {
      sc.local_admins.push_back(key("admin:" + g.name).public_key());
      for (std::size_t i = 0; i < g.aggregators; ++i) {
        aggr_keys[g.name].push_back(key(aggregator_name(g.name, i)));
        sc.aggregators.push_back(aggr_keys[g.name].back().public_key());
      }
    }
    sc.policy = c.policy;
    genesis_ = ledger::make_genesis(sc.msp_pk, sc);
    ledger::Ledger chain(genesis_);

    membership::Msp msp(msp_key, oracle_.get());
    std::map<std::string, membership::LocalAdmin> admins;
    for (const auto& g : c.groups) {
      auto& admin = admins.emplace(g.name, membership::LocalAdmin(key("admin:" + g.name), g.name)).first->second;
      msp.assign_group(admin.public_key(), g.name);
      for (const auto& k : aggr_keys[g.name]) {
        admin.adopt_aggregator(k.public_key());
        msp.record_owner(k.public_key(), admin.public_key(), g.name);
      }
    }

    consensus::OrdererConfig oc{c.timing.view_timeout, c.timing.collect_window, consensus::ByzantineMode::Honest};
    std::vector<ActorId> orderer_ids;
    for (std::size_t i = 0; i < c.orderers; ++i) {
      auto cfg = oc;
      for (const auto& b : c.byzantine) {
        if (b.orderer == i) cfg.mode = b.mode;
      }
      auto id = sim_.add(orderer_name(i), std::make_unique<consensus::OrdererActor>(orderer_name(i), orderer_keys[i],
                                                                                   ledger::Ledger(genesis_), cfg));
      sim_.register_key(orderer_keys[i].public_key(), id);
      orderer_ids.push_back(id);
    }

    // sensors join through their admin before the run starts
    std::map<std::string, std::vector<membership::SensorCredentials>> creds;
    for (const auto& g : c.groups) {
      for (std::size_t i = 0; i < g.sensors; ++i) {
        auto name = sensor_name(g.name, i);
        auto j = admins.at(g.name).sensor_join(chain, c.effective_chain_length(),
                                               derive_chain_seed(seed_, name, c.lambda), c.lambda);
        creds[g.name].push_back(std::move(j.value().credentials));
      }
    }

    auto control = sim_.add("control", std::make_unique<ControlActor>(&sim_, seed_, std::move(msp), std::move(admins),
                                                                      ledger::Ledger(genesis_), c.events,
                                                                      oracle_.get()));
    sim_.register_key(msp_key.public_key(), control);
    for (auto o : orderer_ids) sim_.actor_as<consensus::OrdererActor>(o).add_delivery_target(control);

    const auto total_aggr = c.total_aggregators();
    std::size_t aggr_index = 0;
    std::map<std::string, std::vector<ActorId>> aggr_ids;
    for (const auto& g : c.groups) {
      std::vector<crypto::PublicKey> al;
      for (const auto& k : aggr_keys[g.name]) al.push_back(k.public_key());
      for (std::size_t i = 0; i < g.aggregators; ++i) {
        devicegroup::AggregatorConfig ac;
        ac.group = g.name;
        ac.admin = key("admin:" + g.name).public_key();
        ac.delta = c.policy.delta;
        ac.tx_period = c.timing.tx_period;
        ac.tx_offset = (aggr_index++ * c.timing.tx_period) / total_aggr + c.timing.tx_period / 2;
        ac.endorse_timeout = c.timing.endorse_timeout;
        ac.resubmit_timeout = c.timing.resubmit_timeout;
        auto name = aggregator_name(g.name, i);
        auto actor = std::make_unique<devicegroup::AggregatorActor>(name, aggr_keys[g.name][i], ledger::Ledger(genesis_), ac);
        actor->set_group_aggregators(al);
        for (const auto& cr : creds[g.name]) actor->install_sensor(cr.public_key);
        auto id = sim_.add(name, std::move(actor));
        sim_.register_key(aggr_keys[g.name][i].public_key(), id);
        aggr_ids[g.name].push_back(id);
      }
    }

    std::size_t total_sensors = 0;
    for (const auto& g : c.groups) total_sensors += g.sensors;
    std::size_t sensor_index = 0;
    for (const auto& g : c.groups) {
      for (std::size_t i = 0; i < g.sensors; ++i) {
        devicegroup::SensorActor::Config scfg;
        scfg.period = c.timing.sensor_period;
        scfg.rounds = c.rounds;
        scfg.start_offset =
            c.sensor_start() + (sensor_index++ * c.timing.sensor_period) / std::max<std::size_t>(1, total_sensors);
        auto name = sensor_name(g.name, i);
        auto& cr = creds[g.name][i];
        auto id = sim_.add(name, std::make_unique<devicegroup::SensorActor>(name, cr.public_key, std::move(cr.state), scfg));
        sim_.set_radio(id, aggr_ids[g.name]);
      }
    }
    sim_.faults() = c.faults;
  }

  ScenarioConfig config_;
  std::uint64_t seed_;
  simnet::Simulator sim_;
  std::unique_ptr<membership::OperatorOracle> oracle_;
  ledger::Block genesis_;
};

inline TraceReport run_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  Scenario s(config, seed);
  return s.run();
}

}  // namespace bbox::scenario
