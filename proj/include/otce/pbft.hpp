#pragma once

#include "otce/consensus.hpp"

namespace otce::consensus {

namespace pbft {

enum MessageType : std::uint8_t {
  kPrePrepare = 1,
  kPrepare = 2,
  kCommit = 3,
  kViewChange = 4,
  kNewView = 5,
  kDecided = 6,
};

enum class Phase : std::uint8_t { Idle, PrePrepared, Prepared, Committed, ViewChanging };

std::string to_string(Phase p);

/// Pre-prepare plus 2f matching prepares for one view.
struct PreparedCert {
  std::uint64_t view = 0;
  Bytes value;
  Bytes pre_prepare;            // wire
  std::vector<Bytes> prepares;  // wires
};

}  // namespace pbft

/// One PBFT replica for a single-slot instance.
struct PbftState {
  NodeId node;
  std::uint64_t view = 0;
  /// Highest view this replica has asked to move to.
  std::uint64_t pending_view = 0;
  pbft::Phase phase = pbft::Phase::Idle;
  std::optional<Bytes> request;

  /// Value accepted from the current view's pre-prepare (or new-view).
  std::optional<Bytes> accepted_value;
  Bytes accepted_wire;

  /// (type, view, digest) -> signer -> wire. Only grows.
  std::map<std::tuple<std::uint8_t, std::uint64_t, Bytes>, std::map<NodeId, Bytes>> tallies;
  std::optional<pbft::PreparedCert> prepared;
  /// target view -> signer -> view-change wire.
  std::map<std::uint64_t, std::map<NodeId, Bytes>> view_changes;
  std::set<std::uint64_t> new_views_sent;
  Bytes last_new_view;  // wire, resent to replicas still asking for this view

  std::map<std::uint64_t, Bytes> log;  // slot -> decided value
  std::vector<Bytes> commit_cert;
  bool commit_sent = false;

  std::uint64_t timer_epoch = 0;
  std::uint32_t failed_views = 0;
  DropCounters drops;
};

struct PbftStep {
  PbftState state;
  StepResult result;
};

PbftState pbft_initial(const NodeId& node);

/// Leader of a view: members[view mod n].
const NodeId& pbft_leader(const ConsensusConfig& cfg, std::uint64_t view);

/// Pure step function: event in, new state plus outbound messages out.
PbftStep pbft_step(const PbftState& state, const ReplicaContext& ctx, const Event& event);

/// Equivocation for a faulty PBFT sender: a different value in pre-prepares
/// and new-views, a different digest in prepares and commits, an empty
/// certificate in view-changes. Re-signed with the sender's key.
std::optional<sim::Outbound> pbft_equivocate(const sim::Outbound& msg, const crypto::KeyPair& sender_key,
                                             ProposalLog* log);

}  // namespace otce::consensus
