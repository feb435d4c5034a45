#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "otce/ledger.hpp"
#include "otce/security_plan.hpp"

namespace otce::registry {

using Eid = std::string;

enum class OTCEState : std::uint8_t { New = 0, Running = 1, Suspend = 2, Terminated = 3 };

std::string to_string(OTCEState s);
bool is_legal_transition(OTCEState from, OTCEState to);

enum class TerminationCause : std::uint8_t { None = 0, Results = 1, Expired = 2, Closed = 3 };

std::string to_string(TerminationCause c);

struct QuorumSignature {
  NodeId signer;
  Bytes signature;

  bool operator==(const QuorumSignature&) const = default;
};

struct ResultSubmission {
  Eid eid;
  std::map<NodeId, Bytes> digests;
  std::vector<QuorumSignature> quorum_sigs;

  /// SHA-256 over the canonical encoding of the digest map.
  Bytes result_digest() const;
  /// The message each quorum member signs.
  Bytes signing_message() const;

  bool operator==(const ResultSubmission&) const = default;
};

/// Signs `sub.signing_message()` for each signer and appends to quorum_sigs.
void add_quorum_signature(ResultSubmission& sub, const NodeId& signer, const crypto::KeyPair& key);

struct OTCERecord {
  Eid eid;
  OTCEState state = OTCEState::New;
  std::vector<NodeId> group;  // sorted
  std::uint64_t delta_t = 0;
  Height created_height = 0;
  std::optional<ResultSubmission> results;
  SecurityPlan plan;

  std::string label;
  Bytes context;  // metadata stored with the latest suspend
  TerminationCause cause = TerminationCause::None;
  std::optional<Height> terminated_height;
  std::optional<Height> result_height;

  bool in_group(const NodeId& n) const;
  bool alive() const { return state == OTCEState::Running || state == OTCEState::Suspend; }
  Height expiry_height() const { return created_height + delta_t; }
};

struct Transition {
  Eid eid;
  OTCEState from;
  OTCEState to;
  Height height;
};

// Transaction bodies. Each encodes to the canonical payload of its kind.

struct CreateOTCE {
  std::string label;  // distinguishes otherwise identical requests
  std::vector<NodeId> group;
  std::uint64_t delta_t = 0;
  SecurityPlan plan;

  Bytes encode() const;
  static CreateOTCE decode(ByteView payload);
};

struct SuspendOTCE {
  Eid eid;
  Bytes context;
  std::uint64_t nonce = 0;

  Bytes encode() const;
  static SuspendOTCE decode(ByteView payload);
};

struct ResumeOTCE {
  Eid eid;
  std::uint64_t nonce = 0;

  Bytes encode() const;
  static ResumeOTCE decode(ByteView payload);
};

struct SubmitResult {
  ResultSubmission submission;

  Bytes encode() const;
  static SubmitResult decode(ByteView payload);
};

struct TerminateOTCE {
  Eid eid;
  std::string cause;  // "closed" from a member, "expired" from the contract
  Height at = 0;

  Bytes encode() const;
  static TerminateOTCE decode(ByteView payload);
};

struct UpdatePlan {
  Eid eid;
  TrustVector new_tv;
  std::uint64_t nonce = 0;

  Bytes encode() const;
  static UpdatePlan decode(ByteView payload);
};

/// The OTCE lifecycle contract. All mutation happens inside ledger sealing.
class OTCERegistry : public ledger::ContractHook {
public:
  OTCERegistry(const crypto::KeyDirectory& keys, PlanMapping mapping = {});

  bool handles(ledger::TxKind kind) const override;
  std::optional<std::string> check_format(const ledger::Transaction& tx) const override;
  ledger::TxOutcome apply(const ledger::Transaction& tx, const ledger::BlockContext& ctx) override;
  std::vector<std::pair<ledger::TxKind, Bytes>> end_of_block(const ledger::BlockContext& ctx) override;
  std::string state_dump() const override;

  ledger::TxOutcome apply_create(const ledger::Transaction& tx, const CreateOTCE& body, Height height);
  ledger::TxOutcome apply_suspend(const ledger::Transaction& tx, const SuspendOTCE& body, Height height);
  ledger::TxOutcome apply_resume(const ledger::Transaction& tx, const ResumeOTCE& body, Height height);
  ledger::TxOutcome apply_submit_result(const ledger::Transaction& tx, const SubmitResult& body, Height height);
  ledger::TxOutcome apply_terminate(const ledger::Transaction& tx, const TerminateOTCE& body, Height height);
  ledger::TxOutcome apply_update_plan(const ledger::Transaction& tx, const UpdatePlan& body, Height height);

  /// Terminates every live record whose window has closed at `height`;
  /// returns their eids in eid order.
  std::vector<Eid> expiry_sweep(Height height);

  const OTCERecord* find(const Eid& eid) const;
  std::optional<Eid> eid_for_tx(const Bytes& tx_id) const;
  const std::map<Eid, OTCERecord>& records() const { return records_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  /// (height, plan) for every plan put in force, per eid.
  const std::map<Eid, std::vector<std::pair<Height, SecurityPlan>>>& plan_history() const { return plan_history_; }

  /// `eid state group delta_t created_height` lines.
  void query_dump(std::ostream& out) const;

private:
  void transition(OTCERecord& rec, OTCEState to, Height height);

  const crypto::KeyDirectory* keys_;
  PlanMapping mapping_;
  std::map<Eid, OTCERecord> records_;
  std::map<Bytes, Eid> by_tx_;
  std::vector<Transition> transitions_;
  std::map<Eid, std::vector<std::pair<Height, SecurityPlan>>> plan_history_;
  std::uint64_t next_eid_ = 1;
};

}  // namespace otce::registry
