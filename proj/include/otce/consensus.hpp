#pragma once

#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "otce/crypto.hpp"
#include "otce/security_plan.hpp"
#include "otce/simnet.hpp"

namespace otce::consensus {

using otce::fault_bound;

struct ConsensusConfig {
  Protocol protocol = Protocol::PBFT;
  std::uint32_t n = 0;
  std::uint32_t f_max = 0;
  std::uint32_t quorum = 0;
  Tick view_timeout = 20;
  std::string instance_id;
  std::vector<NodeId> members;  // sorted; index order defines leaders and ballot tiebreaks
  /// Paxos: ticks between successive members' first proposal attempts.
  /// Zero lets every member propose at once.
  std::optional<Tick> proposer_stagger;

  static ConsensusConfig from_plan(const SecurityPlan& plan, std::vector<NodeId> members, std::string instance_id,
                                   Tick view_timeout = 20);
  /// Throws Error{"invalid-consensus-config"}.
  void validate() const;
  std::optional<std::size_t> index_of(const NodeId& node) const;
  bool is_member(const NodeId& node) const { return index_of(node).has_value(); }
};

struct Decision {
  std::string instance_id;
  std::uint64_t slot = 0;
  Bytes value;
  Tick decided_at = 0;
  NodeId node;
};

/// Input to a replica step function.
struct ClientRequest {
  Bytes value;
};
struct Incoming {
  NodeId from;
  Bytes wire;
};
struct TimerFired {
  std::uint64_t id = 0;
};
using Event = std::variant<ClientRequest, Incoming, TimerFired>;

/// Counts of messages a replica refused.
struct DropCounters {
  std::uint64_t bad_signature = 0;
  std::uint64_t non_member = 0;
  std::uint64_t wrong_view = 0;
  std::uint64_t duplicate = 0;
  std::uint64_t malformed = 0;

  std::uint64_t total() const { return bad_signature + non_member + wrong_view + duplicate + malformed; }
};

/// What a replica sees besides its own state: its config and keys.
struct ReplicaContext {
  const ConsensusConfig& cfg;
  const crypto::KeyPair& key;
  const crypto::KeyDirectory& directory;
};

/// Signed protocol message. `proofs` carries embedded signed messages
/// (prepared certificates, view-change sets, commit certificates).
struct SignedMessage {
  std::uint8_t type = 0;
  std::string instance;
  std::uint64_t view = 0;  // PBFT view or Paxos ballot round
  NodeId sender;
  NodeId ballot_node;       // Paxos ballot tiebreak
  std::uint64_t aux = 0;    // Paxos accepted-ballot round
  NodeId aux_node;          // Paxos accepted-ballot node
  Bytes value;
  Bytes digest;
  std::vector<Bytes> proofs;
  Bytes signature;

  Bytes body() const;
  Bytes encode() const;
  /// Throws DecodeError.
  static SignedMessage decode(ByteView wire);
  void sign(const crypto::KeyPair& key);
  bool verify(const crypto::KeyDirectory& dir) const;
};

Bytes value_digest(ByteView value);

/// Deterministic alternative value an equivocating node pushes.
Bytes equivocal_value(ByteView value);

/// Every value any member put forward during a run, for validity checks.
struct ProposalLog {
  std::set<Bytes> values;
};

struct StepResult {
  std::vector<sim::Outbound> out;
  std::vector<sim::TimerRequest> timers;
  std::optional<Decision> decision;
};

}  // namespace otce::consensus
