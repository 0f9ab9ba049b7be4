#pragma once

// PBFT-style ordering among the orderers on OL.
//
// Per height: the view's leader sends PrePrepare(block); replicas that accept it
// broadcast Prepare; a quorum of Prepares locks the block and triggers Commit; a
// quorum of Commits in one view finalizes it and the block is delivered to every
// PL aggregator. Leaders rotate round-robin on timeout (ViewChange). A replica
// locked on a block only prepares a different one when the proposal carries a
// prepare certificate from a later view, which is what keeps two different
// blocks from committing at one height.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "bbox/crypto.hpp"
#include "bbox/ledger.hpp"
#include "bbox/messages.hpp"

namespace bbox::consensus {

using net::ActorId;
using net::ConsensusKind;
using net::ConsensusMsg;
using net::Context;
using net::Message;
using net::PrepareCert;
using net::Time;

enum class ByzantineMode { Honest, Silent, Equivocate, InvalidProposal };

constexpr std::string_view to_string(ByzantineMode m) {
  switch (m) {
    case ByzantineMode::Honest: return "honest";
    case ByzantineMode::Silent: return "silent";
    case ByzantineMode::Equivocate: return "equivocate";
    case ByzantineMode::InvalidProposal: return "invalid";
  }
  return "unknown";
}

inline ByzantineMode parse_byzantine_mode(std::string_view s) {
  if (s == "honest") return ByzantineMode::Honest;
  if (s == "silent") return ByzantineMode::Silent;
  if (s == "equivocate") return ByzantineMode::Equivocate;
  if (s == "invalid") return ByzantineMode::InvalidProposal;
  throw Error(ErrorCode::Config, "unknown byzantine mode '" + std::string(s) + "'");
}

struct OrdererConfig {
  Time view_timeout = 1000;
  Time collect_window = 100;  // new leader waits this long after a ViewChange quorum
  ByzantineMode mode = ByzantineMode::Honest;
};

enum TimerKind : std::uint32_t { kViewTimer = 11, kCollect = 12 };

class OrdererActor : public net::Actor {
 public:
  OrdererActor(std::string name, crypto::SigningKey key, ledger::Ledger replica, OrdererConfig config)
      : name_(std::move(name)), key_(std::move(key)), ledger_(std::move(replica)), config_(config) {}

  const std::string& name() const { return name_; }
  const crypto::PublicKey& public_key() const { return key_.public_key(); }
  const ledger::Ledger& ledger() const { return ledger_; }
  const ledger::Ledger* replica() const override {
    return config_.mode == ByzantineMode::Honest ? &ledger_ : nullptr;
  }
  std::uint64_t view() const { return view_; }
  std::size_t pool_size() const { return pool_.size(); }
  bool seen_nonce(const Bytes& nonce) const { return txl_.contains(nonce); }
  ByzantineMode mode() const { return config_.mode; }

  crypto::PublicKey leader(std::uint64_t view) const {
    const auto& ol = ledger_.config().orderers;
    return ol[view % ol.size()];
  }
  bool is_leader() const { return leader(view_) == public_key(); }

  // Admission of a submitted transaction (once per nonce).
  ledger::BlockFault admit(const ledger::Transaction& tx) {
    if (ledger_.has_nonce(tx.nonce)) return ledger::BlockFault::DuplicateNonce;
    if (txl_.contains(tx.nonce)) return ledger::BlockFault::None;
    auto f = ledger::check_transaction(ledger_.config(), tx);
    if (f != ledger::BlockFault::None) return f;
    txl_.insert(tx.nonce);
    pool_.push_back(tx);
    return f;
  }

  // Leader step: the next block over `txs` (or the configuration update first in line).
  Result<ConsensusMsg> propose_block(std::vector<ledger::Transaction> txs) {
    if (!is_leader()) return Status(ErrorCode::NotLeader, "not the leader of view " + std::to_string(view_));
    ledger::Block b;
    b.height = ledger_.height();
    b.prev_hash = ledger_.tip_hash();
    if (!config_pool_.empty()) {
      b.type = ledger::BlockType::Configuration;
      b.config = config_pool_.front();
    } else {
      if (txs.empty()) return Status(ErrorCode::InvalidParameter, "nothing to propose");
      b.type = ledger::BlockType::Transaction;
      b.transactions = std::move(txs);
    }
    ConsensusMsg m;
    m.kind = ConsensusKind::PrePrepare;
    m.view = view_;
    m.height = b.height;
    m.hash = b.hash();
    m.block = std::move(b);
    m.sign(key_);
    return m;
  }

  void on_start(Context&) override {}

  void on_message(Context& ctx, ActorId from, const Message& msg) override {
    if (config_.mode == ByzantineMode::Silent) return;
    std::visit([&](const auto& m) { handle(ctx, from, m); }, msg);
  }

 private:
  struct Lock {
    std::uint64_t view = 0;
    ledger::Block block;
    PrepareCert cert;
  };

  using Votes = std::map<crypto::PublicKey, crypto::Signature>;
  using VoteKey = std::pair<std::uint64_t, HashDigest>;  // (view, hash)

  template <class T>
  void handle(Context&, ActorId, const T&) {}

  void handle(Context& ctx, ActorId from, const net::TxSubmit& s) {
    bool resubmission = txl_.contains(s.tx.nonce) && !ledger_.has_nonce(s.tx.nonce);
    auto f = admit(s.tx);
    if (resubmission) return;
    ctx.trace("tx_in", 0, 0, f == ledger::BlockFault::None ? "ok" : std::string(to_string(f)));
    // an already committed nonce coming back means the submitter missed the block
    if (f == ledger::BlockFault::DuplicateNonce && txl_.contains(s.tx.nonce)) catch_up(ctx, from, s.known_height, 0);
    if (f != ledger::BlockFault::None) return;
    arm_timer(ctx);
    maybe_propose(ctx);
  }

  void handle(Context& ctx, ActorId, const net::ConfigSubmit& s) {
    const auto& cfg = ledger_.config();
    if (!s.update.verify(cfg.msp_pk) || s.update.config.epoch <= cfg.epoch) {
      ctx.trace("config_in", 0, 0, "AuthError");
      return;
    }
    for (const auto& c : config_pool_) {
      if (c.config.epoch == s.update.config.epoch) return;
    }
    config_pool_.push_back(s.update);
    ctx.trace("config_in", 0, 0, "ok");
    arm_timer(ctx);
    maybe_propose(ctx);
  }

  void handle(Context& ctx, ActorId from, const ConsensusMsg& m) {
    if (m.kind == ConsensusKind::BlockDeliver) {
      on_deliver(ctx, m);
      return;
    }
    if (!ledger_.config().is_orderer(m.sender) || !m.verify_signature()) {
      ctx.trace(to_string(m.kind), 0, 0, "AuthError");
      return;
    }
    if (m.height < ledger_.height()) {
      // late votes are normal; a proposal or view change for an old height means the sender lags
      if (m.kind == ConsensusKind::PrePrepare || m.kind == ConsensusKind::ViewChange)
        catch_up(ctx, from, m.height, m.view + 1);
      return;
    }
    if (m.height > ledger_.height() || (m.view > view_ && m.kind != ConsensusKind::ViewChange)) {
      buffered_.push_back({from, m});
      return;
    }
    switch (m.kind) {
      case ConsensusKind::PrePrepare: on_preprepare(ctx, m); break;
      case ConsensusKind::Prepare: on_prepare(ctx, m); break;
      case ConsensusKind::Commit: on_commit_vote(ctx, m); break;
      case ConsensusKind::ViewChange: on_view_change(ctx, m); break;
      case ConsensusKind::BlockDeliver: break;
    }
  }

  void handle(Context& ctx, ActorId, const net::Timer& t) {
    if (t.kind == kViewTimer) {
      if (t.a != timer_token_) return;  // superseded
      timer_armed_ = false;
      if (armed_at_ != std::make_pair(ledger_.height(), view_)) {
        arm_timer(ctx);
        return;
      }
      if (!has_work()) return;
      ++failed_views_;
      start_view_change(ctx, view_ + 1);
    } else if (t.kind == kCollect) {
      if (t.a != ledger_.height() || t.b != view_ || !is_leader()) return;
      view_ready_ = true;
      pick_new_view_cert();
      maybe_propose(ctx);
    }
  }

  bool has_work() const { return !pool_.empty() || !config_pool_.empty() || lock_.has_value(); }

  void arm_timer(Context& ctx) {
    if (timer_armed_ || !has_work()) return;
    timer_armed_ = true;
    armed_at_ = {ledger_.height(), view_};
    auto timeout = config_.view_timeout * (1 + std::min<std::uint64_t>(failed_views_, 8));
    ctx.schedule(timeout, {kViewTimer, ++timer_token_, 0});
  }

  void broadcast(Context& ctx, const Message& msg) {
    for (const auto& o : ledger_.config().orderers) {
      if (auto to = ctx.address_of(o)) ctx.send(*to, msg);
    }
  }

  std::vector<ledger::Transaction> next_batch() const {
    std::vector<ledger::Transaction> out;
    const auto& cfg = ledger_.config();
    for (const auto& tx : pool_) {
      if (out.size() >= cfg.policy.max_block_txs) break;
      if (!ledger_.has_nonce(tx.nonce)) out.push_back(tx);
    }
    return out;
  }

  void maybe_propose(Context& ctx) {
    if (!is_leader() || !view_ready_ || proposed_.contains({view_, ledger_.height()})) return;
    std::optional<ConsensusMsg> m;
    if (new_view_cert_) {
      // re-propose the block that may already be locked somewhere
      ConsensusMsg p;
      p.kind = ConsensusKind::PrePrepare;
      p.view = view_;
      p.height = ledger_.height();
      p.hash = new_view_cert_->cert.hash;
      p.block = new_view_cert_->block;
      p.justify = new_view_cert_->cert;
      p.sign(key_);
      m = std::move(p);
    } else {
      if (pool_.empty() && config_pool_.empty()) return;
      auto batch = next_batch();
      if (config_.mode == ByzantineMode::InvalidProposal && !batch.empty()) {
        batch.front().endorsements.front().signature.bytes[0] ^= 0x01;
      }
      auto r = propose_block(std::move(batch));
      if (!r) return;
      m = std::move(r.value());
    }
    proposed_.insert({view_, ledger_.height()});
    ctx.trace("propose", 0, 0, std::to_string(m->block->transactions.size()) + " txs");
    if (config_.mode == ByzantineMode::Equivocate) {
      equivocate_proposal(ctx, *m);
      return;
    }
    broadcast(ctx, *m);
  }

  // Sends one block to half of the replicas and a different one (or, with a
  // single transaction, nothing) to the rest.
  void equivocate_proposal(Context& ctx, const ConsensusMsg& m) {
    auto alt = m;
    auto& txs = alt.block->transactions;
    bool has_alt = txs.size() > 1;
    if (has_alt) std::reverse(txs.begin(), txs.end());
    alt.hash = alt.block->hash();
    alt.justify.reset();
    alt.sign(key_);
    const auto& ol = ledger_.config().orderers;
    for (std::size_t i = 0; i < ol.size(); ++i) {
      auto to = ctx.address_of(ol[i]);
      if (!to) continue;
      if (i % 2 == 0) {
        ctx.send(*to, m);
      } else if (has_alt) {
        ctx.send(*to, alt);
      }
    }
  }

  void on_preprepare(Context& ctx, const ConsensusMsg& m) {
    if (m.view < view_ || m.sender != leader(m.view) || !m.block) return;
    auto key = std::make_pair(m.view, m.height);
    if (auto it = accepted_.find(key); it != accepted_.end()) {
      if (it->second.hash() != m.hash) ctx.log({{"event", "equivocation"}, {"orderer", name_}, {"view", m.view}});
      return;
    }
    const auto& block = *m.block;
    if (block.height != m.height || block.hash() != m.hash) return;
    auto check = ledger_.check(block, false);
    if (!check) {
      ctx.trace("prepare", 0, 0, "Withheld:" + std::string(to_string(check.fault)));
      return;
    }
    if (m.justify) {
      if (m.justify->hash != m.hash || m.justify->height != m.height || !m.justify->verify(ledger_.config())) return;
    }
    if (lock_ && lock_->cert.hash != m.hash && !(m.justify && m.justify->view > lock_->view)) {
      ctx.trace("prepare", 0, 0, "Locked");
      return;
    }
    accepted_[key] = block;
    ConsensusMsg vote;
    vote.kind = ConsensusKind::Prepare;
    vote.view = m.view;
    vote.height = m.height;
    vote.hash = m.hash;
    vote.sign(key_);
    if (config_.mode == ByzantineMode::Equivocate) {
      send_conflicting_votes(ctx, vote);
    } else {
      broadcast(ctx, vote);
    }
    arm_timer(ctx);
  }

  void send_conflicting_votes(Context& ctx, const ConsensusMsg& vote) {
    auto fake = vote;
    fake.hash = sha256({vote.hash.bytes(), as_bytes("fork")});
    fake.sign(key_);
    const auto& ol = ledger_.config().orderers;
    for (std::size_t i = 0; i < ol.size(); ++i) {
      if (auto to = ctx.address_of(ol[i])) ctx.send(*to, i % 2 == 0 ? vote : fake);
    }
  }

  const ledger::Block* block_for(std::uint64_t view, const HashDigest& hash) const {
    if (auto it = accepted_.find({view, ledger_.height()}); it != accepted_.end() && it->second.hash() == hash)
      return &it->second;
    if (lock_ && lock_->cert.hash == hash) return &lock_->block;
    return nullptr;
  }

  void on_prepare(Context& ctx, const ConsensusMsg& m) {
    auto& votes = prepares_[{m.view, m.hash}];
    votes[m.sender] = m.signature;
    try_commit_vote(ctx, m.view, m.hash);
  }

  void try_commit_vote(Context& ctx, std::uint64_t view, const HashDigest& hash) {
    if (view != view_ || commit_sent_.contains(view)) return;
    const auto& votes = prepares_[{view, hash}];
    if (votes.size() < ledger_.config().quorum()) return;
    const auto* block = block_for(view, hash);
    if (!block) return;
    PrepareCert cert{view, ledger_.height(), hash, {}};
    for (const auto& [pk, sig] : votes) cert.votes.push_back({pk, sig});
    lock_ = Lock{view, *block, cert};
    commit_sent_.insert(view);
    ConsensusMsg c;
    c.kind = ConsensusKind::Commit;
    c.view = view;
    c.height = ledger_.height();
    c.hash = hash;
    c.sign(key_);
    if (config_.mode == ByzantineMode::Equivocate) {
      send_conflicting_votes(ctx, c);
    } else {
      broadcast(ctx, c);
    }
  }

  void on_commit_vote(Context& ctx, const ConsensusMsg& m) {
    auto& votes = commits_[{m.view, m.hash}];
    votes[m.sender] = m.signature;
    try_finalize(ctx, m.view, m.hash);
  }

  void try_finalize(Context& ctx, std::uint64_t view, const HashDigest& hash) {
    const auto& votes = commits_[{view, hash}];
    auto quorum = ledger_.config().quorum();
    if (votes.size() < quorum) return;
    const auto* source = block_for(view, hash);
    if (!source) return;  // wait for BlockDeliver
    auto block = *source;
    block.quorum.view = view;
    block.quorum.votes.clear();
    for (const auto& [pk, sig] : votes) {
      if (block.quorum.votes.size() == quorum) break;
      block.quorum.votes.push_back({pk, sig});
    }
    if (!ledger_.check(block)) return;
    commit(ctx, std::move(block), true);
  }

  void on_deliver(Context& ctx, const ConsensusMsg& m) {
    if (!m.block) return;
    if (m.block->height > ledger_.height()) {
      future_blocks_.emplace(m.block->height, *m.block);
      return;
    }
    if (m.block->height < ledger_.height() || !ledger_.check(*m.block)) return;
    commit(ctx, *m.block, false);
  }

  void commit(Context& ctx, ledger::Block block, bool deliver) {
    ledger_.append_unchecked(std::move(block));
    const auto& b = ledger_.tip();
    ctx.trace("commit", 0, 0, std::string(to_string(b.type)) + " h=" + std::to_string(b.height));
    if (deliver && config_.mode == ByzantineMode::Honest) {
      ConsensusMsg d;
      d.kind = ConsensusKind::BlockDeliver;
      d.view = b.quorum.view;
      d.height = b.height;
      d.hash = b.hash();
      d.block = b;
      d.sign(key_);
      const auto& cfg = ledger_.config();
      for (const auto& a : cfg.aggregators) {
        if (auto to = ctx.address_of(a)) ctx.send(*to, d);
      }
      for (const auto& o : cfg.orderers) {
        if (o == public_key()) continue;
        if (auto to = ctx.address_of(o)) ctx.send(*to, d);
      }
      for (const auto& extra : extra_recipients_) ctx.send(extra, d);
    }
    new_height(ctx);
  }

  void new_height(Context& ctx) {
    std::deque<ledger::Transaction> keep;
    for (auto& tx : pool_) {
      if (!ledger_.has_nonce(tx.nonce) && ledger::check_transaction(ledger_.config(), tx) == ledger::BlockFault::None)
        keep.push_back(std::move(tx));
    }
    pool_ = std::move(keep);
    const auto epoch = ledger_.config().epoch;
    config_pool_.erase(std::remove_if(config_pool_.begin(), config_pool_.end(),
                                      [&](const ledger::ConfigUpdate& u) { return u.config.epoch <= epoch; }),
                       config_pool_.end());
    accepted_.clear();
    prepares_.clear();
    commits_.clear();
    commit_sent_.clear();
    lock_.reset();
    new_view_cert_.reset();
    view_changes_.clear();
    failed_views_ = 0;
    view_ready_ = true;
    timer_armed_ = false;

    if (auto it = future_blocks_.find(ledger_.height()); it != future_blocks_.end()) {
      auto b = it->second;
      future_blocks_.erase(future_blocks_.begin(), std::next(it));
      if (ledger_.check(b)) {
        commit(ctx, std::move(b), false);
        return;
      }
    }
    auto pending = std::move(buffered_);
    buffered_.clear();
    for (auto& [from, msg] : pending) handle(ctx, from, msg);
    arm_timer(ctx);
    maybe_propose(ctx);
  }

  // Sends the blocks `to` is missing; `attempt` separates retries (the lagging
  // replica's view, or 0 for submitters) so a lost catch-up is answered again.
  void catch_up(Context& ctx, ActorId to, std::uint64_t from_height, std::uint64_t attempt) {
    if (config_.mode != ByzantineMode::Honest || from_height >= ledger_.height()) return;
    if (attempt && !caught_up_.insert({to, ledger_.height(), attempt}).second) return;
    for (auto h = from_height; h < ledger_.height(); ++h) {
      ConsensusMsg d;
      d.kind = ConsensusKind::BlockDeliver;
      d.height = h;
      d.block = ledger_.blocks()[h];
      d.hash = d.block->hash();
      d.sign(key_);
      ctx.send(to, d);
    }
  }

  void start_view_change(Context& ctx, std::uint64_t v) {
    if (v <= view_ && vc_sent_ >= v) return;
    view_ = std::max(view_, v);
    vc_sent_ = view_;
    view_ready_ = false;
    timer_armed_ = false;
    ConsensusMsg vc;
    vc.kind = ConsensusKind::ViewChange;
    vc.view = view_;
    vc.height = ledger_.height();
    if (lock_) {
      vc.justify = lock_->cert;
      vc.block = lock_->block;
      vc.hash = lock_->cert.hash;
    }
    vc.sign(key_);
    ctx.trace("view_change", 0, 0, "view " + std::to_string(view_));
    broadcast(ctx, vc);
    arm_timer(ctx);
    // messages of the new view that arrived early
    auto pending = std::move(buffered_);
    buffered_.clear();
    for (auto& [from, msg] : pending) handle(ctx, from, msg);
  }

  void on_view_change(Context& ctx, const ConsensusMsg& m) {
    if (m.justify) {
      if (!m.block || m.block->hash() != m.justify->hash || m.justify->height != m.height ||
          !m.justify->verify(ledger_.config()))
        return;
    }
    if (m.view < view_) return;
    view_changes_[m.view][m.sender] = m;
    const auto& cfg = ledger_.config();
    if (m.view > view_ && view_changes_[m.view].size() >= cfg.max_faulty() + 1) start_view_change(ctx, m.view);
    if (m.view != view_ || !is_leader() || view_ready_) return;
    const auto& vcs = view_changes_[m.view];
    if (vcs.size() < cfg.quorum() || collecting_.contains({ledger_.height(), view_})) return;
    collecting_.insert({ledger_.height(), view_});
    ctx.schedule(config_.collect_window, {kCollect, ledger_.height(), view_});
  }

  // The highest prepare certificate among the ViewChange messages decides what
  // the new view must re-propose.
  void pick_new_view_cert() {
    new_view_cert_.reset();
    for (const auto& [pk, vc] : view_changes_[view_]) {
      if (!vc.justify) continue;
      if (!new_view_cert_ || vc.justify->view > new_view_cert_->view)
        new_view_cert_ = Lock{vc.justify->view, *vc.block, *vc.justify};
    }
    if (lock_ && (!new_view_cert_ || lock_->view > new_view_cert_->view)) new_view_cert_ = lock_;
  }

 public:
  // Extra BlockDeliver recipients (e.g. the MSP's replica).
  void add_delivery_target(ActorId id) { extra_recipients_.push_back(id); }

 private:
  std::string name_;
  crypto::SigningKey key_;
  ledger::Ledger ledger_;
  OrdererConfig config_;

  std::uint64_t view_ = 0;
  std::uint64_t vc_sent_ = 0;
  bool view_ready_ = true;
  bool timer_armed_ = false;
  std::uint64_t timer_token_ = 0;
  std::pair<std::uint64_t, std::uint64_t> armed_at_;  // (height, view)
  std::uint64_t failed_views_ = 0;

  std::deque<ledger::Transaction> pool_;
  std::set<Bytes> txl_;
  std::deque<ledger::ConfigUpdate> config_pool_;

  std::map<std::pair<std::uint64_t, std::uint64_t>, ledger::Block> accepted_;  // (view, height)
  std::set<std::pair<std::uint64_t, std::uint64_t>> proposed_;
  std::map<VoteKey, Votes> prepares_;
  std::map<VoteKey, Votes> commits_;
  std::set<std::uint64_t> commit_sent_;
  std::optional<Lock> lock_;
  std::optional<Lock> new_view_cert_;
  std::map<std::uint64_t, std::map<crypto::PublicKey, ConsensusMsg>> view_changes_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> collecting_;
  std::vector<std::pair<ActorId, ConsensusMsg>> buffered_;
  std::map<std::uint64_t, ledger::Block> future_blocks_;
  std::set<std::tuple<ActorId, std::uint64_t, std::uint64_t>> caught_up_;
  std::vector<ActorId> extra_recipients_;
};

}  // namespace bbox::consensus
