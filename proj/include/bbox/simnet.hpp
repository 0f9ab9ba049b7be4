#pragma once

// Deterministic discrete-event network simulator.
//
// One virtual clock; events are processed in (time, class, insertion) order with
// message deliveries ahead of timers that expire at the same instant. Every
// actor draws from its own PRNG stream split from the master seed by actor
// name, and every sender has a separate network stream for loss and latency,
// so adding an actor leaves the others' randomness untouched.

#include <fnmatch.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbox/chainsig.hpp"
#include "bbox/ledger.hpp"
#include "bbox/messages.hpp"

namespace bbox::simnet {

using net::ActorId;
using net::Message;
using net::Time;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::string_view name) {
  auto d = sha256(as_bytes(name));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return splitmix64(master ^ splitmix64(v));
}

// Distributions written out so traces do not depend on the standard library's.
inline std::uint64_t uniform_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  if (hi <= lo) return lo;
  return lo + rng() % (hi - lo + 1);
}

inline bool bernoulli(std::mt19937_64& rng, double p) {
  if (p <= 0) return false;
  if (p >= 1) return true;
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

inline bool name_matches(const std::string& pattern, const std::string& name) {
  return fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

enum class TamperMode { Flip, Rewrite };

inline TamperMode parse_tamper_mode(std::string_view s) {
  if (s == "flip") return TamperMode::Flip;
  if (s == "rewrite") return TamperMode::Rewrite;
  throw Error(ErrorCode::Config, "unknown tamper mode '" + std::string(s) + "'");
}

struct LinkRule {
  std::string from = "*";
  std::string to = "*";
  bool applies(const std::string& a, const std::string& b) const { return name_matches(from, a) && name_matches(to, b); }
};

struct LossRule {
  LinkRule link;
  double probability = 0;
};

struct Outage {
  LinkRule link;
  Time start = 0;
  Time end = 0;  // exclusive
};

// Rewrites sensor broadcasts on one link: the payload is replaced and, in
// rewrite mode, sigma1 is recomputed from the public previous key h(sigma2).
struct TamperRule {
  LinkRule link;
  TamperMode mode = TamperMode::Rewrite;
  std::uint32_t first_round = 0;
  std::uint32_t last_round = UINT32_MAX;
  std::string suffix = "|forged";
};

struct FaultPlan {
  Time latency_min = 5;
  Time latency_max = 50;
  std::vector<LossRule> loss;
  std::vector<Outage> outages;
  std::vector<TamperRule> tamper;

  double loss_probability(const std::string& from, const std::string& to) const {
    double p = 0;
    for (const auto& r : loss) {
      if (r.link.applies(from, to)) p = std::max(p, r.probability);
    }
    return p;
  }
  bool in_outage(const std::string& from, const std::string& to, Time t) const {
    for (const auto& o : outages) {
      if (o.link.applies(from, to) && t >= o.start && t < o.end) return true;
    }
    return false;
  }
  const TamperRule* tamper_rule(const std::string& from, const std::string& to, std::uint32_t round) const {
    for (const auto& r : tamper) {
      if (r.link.applies(from, to) && round >= r.first_round && round <= r.last_round) return &r;
    }
    return nullptr;
  }
};

// Blocks a sensor's broadcasts on `link` for g rounds starting at `start`, so the
// next verification walks g + 1 steps.
inline FaultPlan inject_outage(FaultPlan plan, LinkRule link, Time start, std::uint64_t g, Time period) {
  if (g == 0) return plan;
  plan.outages.push_back({std::move(link), start, start + g * period});
  return plan;
}

struct TraceRow {
  Time time = 0;
  std::string actor;
  std::string op;
  std::uint64_t hash_ops = 0;
  std::uint64_t walk_length = 0;
  std::string outcome;
};

struct Mutation {
  Time time = 0;
  std::string from;
  std::string to;
  std::uint32_t round = 0;
  std::string mode;
};

class Simulator {
 public:
  explicit Simulator(std::uint64_t seed) : seed_(seed) {}

  ActorId add(std::string name, std::unique_ptr<net::Actor> actor) {
    auto id = static_cast<ActorId>(actors_.size());
    Slot s;
    s.name = std::move(name);
    s.actor = std::move(actor);
    s.rng.seed(stream_seed(seed_, s.name));
    s.net_rng.seed(stream_seed(seed_, "net/" + s.name));
    actors_.push_back(std::move(s));
    by_name_[actors_.back().name] = id;
    return id;
  }

  void register_key(const crypto::PublicKey& pk, ActorId id) { directory_[pk] = id; }
  void set_radio(ActorId sensor, std::vector<ActorId> neighbors) { actors_.at(sensor).radio = std::move(neighbors); }
  FaultPlan& faults() { return faults_; }
  const FaultPlan& faults() const { return faults_; }

  net::Actor& actor(ActorId id) { return *actors_.at(id).actor; }
  template <class T>
  T& actor_as(ActorId id) {
    return dynamic_cast<T&>(*actors_.at(id).actor);
  }
  const std::string& name(ActorId id) const { return actors_.at(id).name; }
  std::optional<ActorId> find(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t actor_count() const { return actors_.size(); }
  Time now() const { return now_; }

  // Delivers `msg` to `to` at `at`, bypassing the fault plan (scripted injections).
  void inject(Time at, ActorId to, Message msg, std::optional<ActorId> from = std::nullopt) {
    push(at, 0, to, from.value_or(to), std::move(msg));
  }
  void schedule_timer(Time at, ActorId to, net::Timer t) { push(at, 1, to, to, t); }

  void start() {
    if (started_) return;
    crypto::VerifyMemo::Scope memo(memo_);
    started_ = true;
    for (ActorId id = 0; id < actors_.size(); ++id) {
      Ctx ctx(*this, id);
      actors_[id].actor->on_start(ctx);
      check_replica(id);
    }
  }

  // Processes events up to and including `horizon`. Returns the number handled.
  std::uint64_t run_until(Time horizon) {
    crypto::VerifyMemo::Scope memo(memo_);
    start();
    std::uint64_t handled = 0;
    while (!queue_.empty() && queue_.top().time <= horizon) {
      auto ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      Ctx ctx(*this, ev.to);
      actors_[ev.to].actor->on_message(ctx, ev.from, ev.msg);
      check_replica(ev.to);
      ++handled;
    }
    if (now_ < horizon) now_ = horizon;
    events_ += handled;
    return handled;
  }

  std::uint64_t events() const { return events_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  const std::vector<nlohmann::json>& log() const { return log_; }
  const std::vector<Mutation>& mutations() const { return mutations_; }
  std::uint64_t dropped() const { return dropped_; }

  // Honest replicas must always be prefix-related; checked after every event.
  bool check_consistency = true;
  std::uint64_t consistency_violations() const { return violations_; }
  const std::vector<HashDigest>& canonical_chain() const { return canonical_; }

  std::string trace_csv() const {
    std::ostringstream out;
    out << "event_time,actor,op,hash_ops,walk_length,outcome\n";
    for (const auto& r : trace_) {
      out << r.time << ',' << r.actor << ',' << r.op << ',' << r.hash_ops << ',' << r.walk_length << ',' << r.outcome
          << '\n';
    }
    return out.str();
  }

  std::string log_jsonl() const {
    std::string out;
    for (const auto& e : log_) out += e.dump() + "\n";
    return out;
  }

 private:
  struct Slot {
    std::string name;
    std::unique_ptr<net::Actor> actor;
    std::mt19937_64 rng;
    std::mt19937_64 net_rng;
    std::vector<ActorId> radio;
    std::uint64_t checked_height = 0;
  };

  struct Event {
    Time time;
    int klass;  // 0 delivery, 1 timer
    std::uint64_t seq;
    ActorId to;
    ActorId from;
    Message msg;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.klass != b.klass) return a.klass > b.klass;
      return a.seq > b.seq;
    }
  };

  // Frames of one broadcast round share latency, loss fate (loss drops the
  // rest of the round) and, on tampered links, are held until the key frame.
  struct RoundState {
    std::uint32_t round = UINT32_MAX;
    Time latency = 0;
    bool dropped = false;
    std::vector<net::BroadcastFrame> held;
  };

  class Ctx : public net::Context {
   public:
    Ctx(Simulator& sim, ActorId self) : sim_(sim), self_(self) {}
    Time now() const override { return sim_.now_; }
    ActorId self() const override { return self_; }
    void send(ActorId to, Message msg) override { sim_.transmit(self_, to, std::move(msg)); }
    void schedule(Time delay, net::Timer timer) override { sim_.push(sim_.now_ + delay, 1, self_, self_, timer); }
    std::optional<ActorId> address_of(const crypto::PublicKey& pk) const override {
      auto it = sim_.directory_.find(pk);
      if (it == sim_.directory_.end()) return std::nullopt;
      return it->second;
    }
    std::vector<ActorId> radio_neighbors() const override { return sim_.actors_[self_].radio; }
    std::mt19937_64& rng() override { return sim_.actors_[self_].rng; }
    void trace(std::string_view op, std::uint64_t hash_ops, std::uint64_t walk, std::string_view outcome) override {
      sim_.trace_.push_back({sim_.now_, sim_.actors_[self_].name, std::string(op), hash_ops, walk, std::string(outcome)});
    }
    void log(nlohmann::json event) override {
      event["t"] = sim_.now_;
      event["actor"] = sim_.actors_[self_].name;
      sim_.log_.push_back(std::move(event));
    }

   private:
    Simulator& sim_;
    ActorId self_;
  };

  void push(Time at, int klass, ActorId to, ActorId from, Message msg) {
    queue_.push(Event{at, klass, seq_++, to, from, std::move(msg)});
  }

  void transmit(ActorId from, ActorId to, Message msg) {
    auto& src = actors_[from];
    const auto& a = src.name;
    const auto& b = actors_[to].name;
    if (faults_.in_outage(a, b, now_)) {
      ++dropped_;
      return;
    }
    auto* frame = std::get_if<net::BroadcastFrame>(&msg);
    if (!frame) {
      if (bernoulli(src.net_rng, faults_.loss_probability(a, b))) {
        ++dropped_;
        return;
      }
      push(now_ + uniform_int(src.net_rng, faults_.latency_min, faults_.latency_max), 0, to, from, std::move(msg));
      return;
    }
    auto& rs = rounds_[{from, to}];
    if (rs.round != frame->round) {
      rs = RoundState{};
      rs.round = frame->round;
      rs.latency = uniform_int(src.net_rng, faults_.latency_min, faults_.latency_max);
    }
    if (rs.dropped || bernoulli(src.net_rng, faults_.loss_probability(a, b))) {
      rs.dropped = true;
      ++dropped_;
      return;
    }
    const auto* rule = faults_.tamper_rule(a, b, frame->round);
    if (!rule) {
      push(now_ + rs.latency, 0, to, from, std::move(msg));
      return;
    }
    rs.held.push_back(*frame);
    if (frame->type != net::FrameType::SecretKey) return;
    tamper(*rule, rs.held);
    mutations_.push_back({now_, a, b, frame->round, rule->mode == TamperMode::Flip ? "flip" : "rewrite"});
    for (auto& f : rs.held) push(now_ + rs.latency, 0, to, from, std::move(f));
    rs.held.clear();
  }

  static void tamper(const TamperRule& rule, std::vector<net::BroadcastFrame>& frames) {
    net::BroadcastFrame* payload = nullptr;
    net::BroadcastFrame* hash = nullptr;
    net::BroadcastFrame* key = nullptr;
    for (auto& f : frames) {
      if (f.type == net::FrameType::Payload) payload = &f;
      if (f.type == net::FrameType::Hash) hash = &f;
      if (f.type == net::FrameType::SecretKey) key = &f;
    }
    if (!payload) return;
    payload->data.insert(payload->data.end(), rule.suffix.begin(), rule.suffix.end());
    if (rule.mode != TamperMode::Rewrite || !hash || !key) return;
    auto k = HashDigest::from_bytes(key->data);
    ChainHash h(static_cast<unsigned>(k.size() * 8));
    auto forged = chainsig::bind_message(h, payload->data, h(k));
    hash->data.assign(forged.bytes().begin(), forged.bytes().end());
  }

  void check_replica(ActorId id) {
    if (!check_consistency) return;
    const auto* l = actors_[id].actor->replica();
    if (!l) return;
    auto& checked = actors_[id].checked_height;
    for (auto h = checked; h < l->height(); ++h) {
      auto hash = l->blocks()[h].hash();
      if (h < canonical_.size()) {
        if (canonical_[h] != hash) {
          ++violations_;
          log_.push_back({{"t", now_}, {"actor", actors_[id].name}, {"event", "consistency_violation"}, {"height", h}});
        }
      } else {
        canonical_.push_back(hash);
      }
    }
    checked = l->height();
  }

  std::uint64_t seed_;
  crypto::VerifyMemo memo_;
  std::vector<Slot> actors_;
  std::map<std::string, ActorId> by_name_;
  std::map<crypto::PublicKey, ActorId> directory_;
  FaultPlan faults_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  Time now_ = 0;
  bool started_ = false;
  std::uint64_t events_ = 0;
  std::map<std::pair<ActorId, ActorId>, RoundState> rounds_;
  std::vector<TraceRow> trace_;
  std::vector<nlohmann::json> log_;
  std::vector<Mutation> mutations_;
  std::uint64_t dropped_ = 0;
  std::vector<HashDigest> canonical_;
  std::uint64_t violations_ = 0;
};

}  // namespace bbox::simnet
