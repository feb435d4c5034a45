#pragma once

#include <memory>

#include "otce/paxos.hpp"
#include "otce/pbft.hpp"

namespace otce::consensus {

/// One consensus instance to run on a fresh simulated network.
struct InstanceSpec {
  ConsensusConfig cfg;
  sim::NetworkConfig net;
  std::vector<sim::FaultSpec> faults;
  Bytes request;
  /// Members that receive the client request; empty means all.
  std::vector<NodeId> request_targets;
  Tick request_at = 0;
  Tick max_ticks = 5000;
};

struct InstanceOutcome {
  std::vector<Decision> decisions;  // every decision, in order of occurrence
  std::set<NodeId> faulty;
  sim::Trace trace;
  sim::Metrics metrics;
  DropCounters drops;
  ProposalLog proposals;

  /// Honest members that never decided.
  std::vector<NodeId> undecided;
  bool stalled = false;
  /// Agreement, validity or integrity violations, plus "fault-bound-exceeded"
  /// when more members were faulty than the plan tolerates.
  std::vector<std::string> safety_flags;

  bool violation() const;
  std::optional<Tick> last_decision_tick() const;
  /// Distinct PBFT views / Paxos ballots observed in honest decisions.
  std::uint64_t max_view = 0;
  std::uint32_t ballots = 0;
};

/// Wraps a replica step function as a simnet process.
class ReplicaProcess : public sim::Process {
public:
  ReplicaProcess(const ConsensusConfig& cfg, const crypto::KeyPair& key, const crypto::KeyDirectory& dir,
                 const NodeId& node, const sim::Network& net, std::vector<Decision>& sink);

  sim::StepOutput on_message(const NodeId& from, const Bytes& payload, const std::string& kind) override;
  sim::StepOutput on_timer(std::uint64_t id) override;

  const std::variant<PbftState, PaxosState>& state() const { return state_; }
  const DropCounters& drops() const;
  std::size_t decisions() const { return decisions_; }

private:
  sim::StepOutput step(const Event& ev);

  const ConsensusConfig& cfg_;
  const crypto::KeyPair& key_;
  const crypto::KeyDirectory& dir_;
  const sim::Network& net_;
  std::vector<Decision>& sink_;
  std::variant<PbftState, PaxosState> state_;
  std::size_t decisions_ = 0;
};

/// Runs one instance with the given faults and checks agreement, validity,
/// integrity and termination over the honest members.
InstanceOutcome run_instance(const InstanceSpec& spec, crypto::Keyring& keys);

}  // namespace otce::consensus
