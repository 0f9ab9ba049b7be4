#pragma once

// Membership service provider (MSP), local administrators, and the join and
// revoke protocols over the OL / LL / PL whitelists and each group's AL / SL.
//
// On-chain lists only change through an MSP-signed configuration update; the MSP
// stages additions and removals until config_update() is called. Group-level
// lists (AL, SL and every aggregator's CL) change through GroupUpdate messages
// signed by the group's local administrator and bound to its group id.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bbox/chainsig.hpp"
#include "bbox/crypto.hpp"
#include "bbox/error.hpp"
#include "bbox/ledger.hpp"

namespace bbox::membership {

using crypto::PublicKey;
using crypto::Signature;
using crypto::SigningKey;

enum class Role : std::uint8_t { Orderer = 0, LocalAdmin = 1, Aggregator = 2 };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::Orderer: return "orderer";
    case Role::LocalAdmin: return "local_admin";
    case Role::Aggregator: return "aggregator";
  }
  return "unknown";
}

// Out-of-band physical identity proof, approved by a human operator.
struct IdentityProof {
  PublicKey subject;
  std::string operator_approval;
};

class OperatorOracle {
 public:
  void approve(const PublicKey& pk, std::string token) { approvals_[pk] = std::move(token); }
  IdentityProof issue(const PublicKey& pk) const {
    auto it = approvals_.find(pk);
    return {pk, it == approvals_.end() ? std::string{} : it->second};
  }
  bool check(const IdentityProof& pi, const PublicKey& claimed) const {
    if (pi.subject != claimed) return false;
    auto it = approvals_.find(pi.subject);
    return it != approvals_.end() && !pi.operator_approval.empty() && it->second == pi.operator_approval;
  }

 private:
  std::map<PublicKey, std::string> approvals_;
};

// AggrAdd request from a local admin for an aggregator of its group.
struct AggrAddRequest {
  std::string group;
  PublicKey aggregator;
  PublicKey admin;
  Signature signature;

  static Bytes signing_bytes(const std::string& group, const PublicKey& aggr, const PublicKey& admin) {
    ByteWriter w;
    w.str("bbox/aggr-add").str(group).raw(aggr.bytes).raw(admin.bytes);
    return std::move(w).take();
  }
  bool verify() const { return crypto::verify(admin, signing_bytes(group, aggregator, admin), signature); }
};

// Removal of a group aggregator requested by its local admin.
struct AggrRevokeRequest {
  std::string group;
  PublicKey aggregator;
  PublicKey admin;
  Signature signature;

  static Bytes signing_bytes(const std::string& group, const PublicKey& aggr, const PublicKey& admin) {
    ByteWriter w;
    w.str("bbox/aggr-rm").str(group).raw(aggr.bytes).raw(admin.bytes);
    return std::move(w).take();
  }
  bool verify() const { return crypto::verify(admin, signing_bytes(group, aggregator, admin), signature); }
};

enum class GroupOp : std::uint8_t { AddSensor = 0, RemoveSensor = 1, SetAggregators = 2 };

constexpr std::string_view to_string(GroupOp op) {
  switch (op) {
    case GroupOp::AddSensor: return "AggrUpd";
    case GroupOp::RemoveSensor: return "AggRevokeSensor";
    case GroupOp::SetAggregators: return "AggrList";
  }
  return "unknown";
}

// Local admin -> group aggregator push (AggrUpd, AggRevokeSensor, AL copy).
struct GroupUpdate {
  std::string group;
  std::uint64_t sequence = 0;
  GroupOp op = GroupOp::AddSensor;
  HashDigest sensor;                    // AddSensor / RemoveSensor
  std::vector<PublicKey> aggregators;   // SetAggregators
  PublicKey admin;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.str("bbox/group-upd").str(group).u64(sequence).u8(static_cast<std::uint8_t>(op)).blob(sensor.bytes());
    w.u32(static_cast<std::uint32_t>(aggregators.size()));
    for (const auto& a : aggregators) w.raw(a.bytes);
    w.raw(admin.bytes);
    return std::move(w).take();
  }
  bool verify() const { return crypto::verify(admin, signing_bytes(), signature); }
};

struct RemoveOp {
  Role role;
  PublicKey pk;
};

class Msp {
 public:
  Msp(SigningKey key, const OperatorOracle* oracle) : key_(std::move(key)), oracle_(oracle) {}

  const PublicKey& public_key() const { return key_.public_key(); }
  bool online() const { return online_; }
  void set_online(bool up) { online_ = up; }

  const std::vector<PublicKey>& pending(Role r) const { return pending_[static_cast<int>(r)]; }
  const std::vector<RemoveOp>& pending_removals() const { return oper_; }

  Status orderer_add(const ledger::Ledger& chain, const IdentityProof& pi, const PublicKey& pk) {
    return stage(chain, Role::Orderer, pi, pk);
  }

  Status ladmin_add(const ledger::Ledger& chain, const IdentityProof& pi, const PublicKey& pk) {
    return stage(chain, Role::LocalAdmin, pi, pk);
  }

  // (pk_LA in LL) and valid request signature and valid proof and pk not yet in PL.
  Status aggr_add(const ledger::Ledger& chain, const IdentityProof& pi, const AggrAddRequest& req) {
    if (!online_) return Status(ErrorCode::MspUnavailable, "MSP offline");
    if (!admin_known(chain, req.admin)) return Status(ErrorCode::Auth, "requesting admin not on LL");
    if (!req.verify()) return Status(ErrorCode::Auth, "bad AggrAdd signature");
    if (auto it = admin_group_.find(req.admin); it != admin_group_.end() && it->second != req.group)
      return Status(ErrorCode::Auth, "admin does not manage group " + req.group);
    auto s = stage(chain, Role::Aggregator, pi, req.aggregator);
    if (s) aggr_owner_[req.aggregator] = {req.admin, req.group};
    return s;
  }

  // Binds a local admin to the group it manages (set when LAdminSetup runs).
  void assign_group(const PublicKey& admin, const std::string& group) { admin_group_[admin] = group; }
  // Ownership of aggregators that are already on PL in the genesis roster.
  void record_owner(const PublicKey& aggr, const PublicKey& admin, const std::string& group) {
    aggr_owner_[aggr] = {admin, group};
  }

  // Orderers and local admins: MSP authority alone. Aggregators: a request
  // signed by the admin that registered them.
  Status node_revoke(const ledger::Ledger& chain, Role role, const PublicKey& target,
                     const std::optional<AggrRevokeRequest>& request = std::nullopt) {
    if (!online_) return Status(ErrorCode::MspUnavailable, "MSP offline");
    const auto& cfg = chain.config();
    if (role == Role::Aggregator) {
      if (!request || request->aggregator != target || !request->verify())
        return Status(ErrorCode::Auth, "aggregator revocation needs its admin's signature");
      auto owner = aggr_owner_.find(target);
      if (owner == aggr_owner_.end() || owner->second.admin != request->admin || owner->second.group != request->group)
        return Status(ErrorCode::Auth, "requesting admin does not own this aggregator");
      if (!cfg.is_local_admin(request->admin)) return Status(ErrorCode::Auth, "requesting admin not on LL");
    }
    auto& staged = pending_[static_cast<int>(role)];
    if (auto it = std::find(staged.begin(), staged.end(), target); it != staged.end()) {
      staged.erase(it);
      return Status::ok();
    }
    if (!on_chain(cfg, role, target)) return Status(ErrorCode::NotFound, "key not on the list");
    for (const auto& op : oper_) {
      if (op.role == role && op.pk == target) return Status::ok();
    }
    oper_.push_back({role, target});
    return Status::ok();
  }

  Status policy_update(const ledger::Policy& policy) {
    if (!online_) return Status(ErrorCode::MspUnavailable, "MSP offline");
    policy_ = policy;
    return Status::ok();
  }

  // Folds staged additions, removals and policy onto the configuration in force.
  Result<ledger::ConfigUpdate> config_update(const ledger::Ledger& chain) {
    if (!online_) return Status(ErrorCode::MspUnavailable, "MSP offline");
    auto next = chain.config();
    next.epoch += 1;
    auto merge = [](std::vector<PublicKey>& list, const std::vector<PublicKey>& add) {
      for (const auto& pk : add) {
        if (!ledger::SystemConfig::contains(list, pk)) list.push_back(pk);
      }
    };
    merge(next.orderers, pending(Role::Orderer));
    merge(next.local_admins, pending(Role::LocalAdmin));
    merge(next.aggregators, pending(Role::Aggregator));
    for (const auto& op : oper_) {
      auto& list = list_for(next, op.role);
      list.erase(std::remove(list.begin(), list.end(), op.pk), list.end());
      if (op.role == Role::Aggregator) aggr_owner_.erase(op.pk);
    }
    if (policy_) next.policy = *policy_;
    try {
      next.validate();
    } catch (const Error& e) {
      return Status(ErrorCode::Config, e.what());
    }
    for (auto& p : pending_) p.clear();
    oper_.clear();
    policy_.reset();
    return ledger::ConfigUpdate::sign(std::move(next), key_);
  }

 private:
  struct Owner {
    PublicKey admin;
    std::string group;
  };

  static std::vector<PublicKey>& list_for(ledger::SystemConfig& c, Role r) {
    switch (r) {
      case Role::Orderer: return c.orderers;
      case Role::LocalAdmin: return c.local_admins;
      case Role::Aggregator: break;
    }
    return c.aggregators;
  }

  static bool on_chain(const ledger::SystemConfig& c, Role r, const PublicKey& pk) {
    switch (r) {
      case Role::Orderer: return c.is_orderer(pk);
      case Role::LocalAdmin: return c.is_local_admin(pk);
      case Role::Aggregator: break;
    }
    return c.is_aggregator(pk);
  }

  bool admin_known(const ledger::Ledger& chain, const PublicKey& admin) const {
    const auto& staged = pending(Role::LocalAdmin);
    return chain.config().is_local_admin(admin) || std::find(staged.begin(), staged.end(), admin) != staged.end();
  }

  // (pk not in L_MSP) and (pk not in L_BC) and valid proof
  Status stage(const ledger::Ledger& chain, Role role, const IdentityProof& pi, const PublicKey& pk) {
    if (!online_) return Status(ErrorCode::MspUnavailable, "MSP offline");
    if (!oracle_ || !oracle_->check(pi, pk)) return Status(ErrorCode::Auth, "identity proof rejected");
    auto& staged = pending_[static_cast<int>(role)];
    if (std::find(staged.begin(), staged.end(), pk) != staged.end() || on_chain(chain.config(), role, pk))
      return Status(ErrorCode::Duplicate, std::string(to_string(role)) + " already registered");
    staged.push_back(pk);
    return Status::ok();
  }

  SigningKey key_;
  const OperatorOracle* oracle_;
  bool online_ = true;
  std::vector<PublicKey> pending_[3];
  std::vector<RemoveOp> oper_;
  std::optional<ledger::Policy> policy_;
  std::map<PublicKey, Owner> aggr_owner_;
  std::map<PublicKey, std::string> admin_group_;
};

struct SensorCredentials {
  HashDigest public_key;
  chainsig::ChainKeyState state;
};

class LocalAdmin {
 public:
  LocalAdmin(SigningKey key, std::string group) : key_(std::move(key)), group_(std::move(group)) {}

  const PublicKey& public_key() const { return key_.public_key(); }
  const std::string& group() const { return group_; }
  const std::vector<PublicKey>& aggregators() const { return al_; }
  const std::vector<HashDigest>& sensors() const { return sl_; }
  bool has_sensor(const HashDigest& pk) const { return std::find(sl_.begin(), sl_.end(), pk) != sl_.end(); }
  bool has_aggregator(const PublicKey& pk) const { return std::find(al_.begin(), al_.end(), pk) != al_.end(); }
  bool tombstoned(const HashDigest& pk) const { return tombstones_.contains(pk); }

  AggrAddRequest sign_aggr_add(const PublicKey& aggr) const {
    return {group_, aggr, public_key(), key_.sign(AggrAddRequest::signing_bytes(group_, aggr, public_key()))};
  }

  AggrRevokeRequest sign_aggr_revoke(const PublicKey& aggr) const {
    return {group_, aggr, public_key(), key_.sign(AggrRevokeRequest::signing_bytes(group_, aggr, public_key()))};
  }

  // AggrSetup + AggrAdd. On success the aggregator joins AL and the returned
  // AL copy must be pushed to every group aggregator.
  Result<GroupUpdate> aggr_setup_and_add(Msp& msp, const ledger::Ledger& chain, const IdentityProof& pi,
                                         const PublicKey& aggr) {
    if (!chain.config().is_local_admin(public_key())) return Status(ErrorCode::Auth, "local admin not on LL");
    if (has_aggregator(aggr)) return Status(ErrorCode::Duplicate, "aggregator already in AL");
    auto s = msp.aggr_add(chain, pi, sign_aggr_add(aggr));
    if (!s) return s;
    al_.push_back(aggr);
    return make_update(GroupOp::SetAggregators, {}, al_);
  }

  // Adds an aggregator that is already on PL (e.g. after a restore) without MSP involvement.
  GroupUpdate adopt_aggregator(const PublicKey& aggr) {
    if (!has_aggregator(aggr)) al_.push_back(aggr);
    return make_update(GroupOp::SetAggregators, {}, al_);
  }

  // SensorJoin: the admin side runs key generation and hands the sensor its pebbles.
  struct Join {
    SensorCredentials credentials;
    GroupUpdate update;
  };

  Result<Join> sensor_join(const ledger::Ledger& chain, std::uint64_t n, ByteView seed, unsigned lambda = 256) {
    if (!chain.config().is_local_admin(public_key())) return Status(ErrorCode::Auth, "local admin not on LL");
    if (n == 0) return Status(ErrorCode::InvalidParameter, "chain length must be at least 1");
    chainsig::KeyPair kp;
    try {
      kp = chainsig::ot_keygen(n, seed, lambda);
    } catch (const Error& e) {
      return Status(e.code(), e.what());
    }
    if (has_sensor(kp.public_key) || tombstoned(kp.public_key))
      return Status(ErrorCode::Duplicate, "sensor key already used in this group");
    sl_.push_back(kp.public_key);
    auto upd = make_update(GroupOp::AddSensor, kp.public_key, {});
    return Join{{kp.public_key, std::move(kp.state)}, std::move(upd)};
  }

  // Admits a sensor key created elsewhere (sensor transfer into this group).
  Result<GroupUpdate> admit_sensor(const HashDigest& pk) {
    if (has_sensor(pk) || tombstoned(pk)) return Status(ErrorCode::Duplicate, "sensor key already used in this group");
    sl_.push_back(pk);
    return make_update(GroupOp::AddSensor, pk, {});
  }

  // AggRevokeSensor: removes the sensor from SL and from every group CL.
  Result<GroupUpdate> agg_revoke_sensor(const HashDigest& sensor) {
    if (!has_sensor(sensor)) return Status(ErrorCode::Auth, "sensor not managed by this admin");
    sl_.erase(std::remove(sl_.begin(), sl_.end(), sensor), sl_.end());
    tombstones_.insert(sensor);
    return make_update(GroupOp::RemoveSensor, sensor, {});
  }

  // Detaches a transferred sensor without tombstoning its key.
  Result<GroupUpdate> release_sensor(const HashDigest& sensor) {
    if (!has_sensor(sensor)) return Status(ErrorCode::Auth, "sensor not managed by this admin");
    sl_.erase(std::remove(sl_.begin(), sl_.end(), sensor), sl_.end());
    return make_update(GroupOp::RemoveSensor, sensor, {});
  }

  // GroupRevoke of an aggregator: drops it from AL and asks the MSP to remove it from PL.
  struct AggrRevocation {
    GroupUpdate update;
    AggrRevokeRequest request;
  };

  Result<AggrRevocation> group_revoke(const PublicKey& aggr) {
    if (!has_aggregator(aggr)) return Status(ErrorCode::Auth, "aggregator not managed by this admin");
    al_.erase(std::remove(al_.begin(), al_.end(), aggr), al_.end());
    return AggrRevocation{make_update(GroupOp::SetAggregators, {}, al_), sign_aggr_revoke(aggr)};
  }

 private:
  GroupUpdate make_update(GroupOp op, HashDigest sensor, std::vector<PublicKey> aggrs) {
    GroupUpdate u;
    u.group = group_;
    u.sequence = ++sequence_;
    u.op = op;
    u.sensor = sensor;
    u.aggregators = std::move(aggrs);
    u.admin = public_key();
    u.signature = key_.sign(u.signing_bytes());
    return u;
  }

  SigningKey key_;
  std::string group_;
  std::vector<PublicKey> al_;
  std::vector<HashDigest> sl_;
  std::set<HashDigest> tombstones_;
  std::uint64_t sequence_ = 0;
};

}  // namespace bbox::membership
