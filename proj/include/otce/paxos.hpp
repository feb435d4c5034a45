#pragma once

#include "otce/consensus.hpp"

namespace otce::consensus {

namespace paxos {

enum MessageType : std::uint8_t {
  kPrepare = 11,   // phase 1a
  kPromise = 12,   // phase 1b
  kAccept = 13,    // phase 2a
  kAccepted = 14,  // phase 2b
  kNack = 15,
  kDecided = 16,
};

/// Totally ordered ballot: (round, proposer id).
struct Ballot {
  std::uint64_t round = 0;
  NodeId node;

  auto operator<=>(const Ballot&) const = default;
  bool is_zero() const { return round == 0; }
};

enum class Phase : std::uint8_t { Idle, Preparing, Accepting, Done };

}  // namespace paxos

/// One Paxos node acting as proposer, acceptor and learner.
struct PaxosState {
  NodeId node;

  // Acceptor.
  paxos::Ballot promised;
  paxos::Ballot accepted_ballot;
  Bytes accepted_value;

  // Proposer.
  std::optional<Bytes> request;
  paxos::Phase phase = paxos::Phase::Idle;
  paxos::Ballot ballot;
  std::uint64_t highest_round_seen = 0;
  std::map<NodeId, std::pair<paxos::Ballot, Bytes>> promises;
  std::uint32_t attempts = 0;

  // Learner: ballot -> acceptor -> value.
  std::map<paxos::Ballot, std::map<NodeId, Bytes>> accepted_votes;

  std::map<std::uint64_t, Bytes> log;
  std::uint64_t timer_epoch = 0;
  DropCounters drops;
};

struct PaxosStep {
  PaxosState state;
  StepResult result;
};

PaxosState paxos_initial(const NodeId& node);

/// Pure step function for single-decree Paxos.
PaxosStep paxos_step(const PaxosState& state, const ReplicaContext& ctx, const Event& event);

/// Number of distinct ballots this node has started.
inline std::uint32_t paxos_ballots_started(const PaxosState& s) { return s.attempts; }

}  // namespace otce::consensus
