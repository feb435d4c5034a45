#pragma once

#include <deque>
#include <iosfwd>
#include <map>
#include <set>
#include <vector>

#include "otce/crypto.hpp"
#include "otce/types.hpp"

namespace otce::ltm {

using EdgeId = std::string;

/// A group of nodes sharing one trust value.
struct Hyperedge {
  EdgeId id;
  std::vector<NodeId> members;  // sorted, duplicate-free, size >= 2
  double trust = 0.0;
};

struct BehaviorObservation {
  NodeId subject;
  EdgeId edge_id;
  bool compliant = true;
  std::uint64_t latency = 0;
  Height observed_at = 0;

  Bytes encode() const;
};

struct OracleFeedRecord {
  BehaviorObservation payload;
  std::string oracle_id;
  Bytes signature;
};

/// Signs an observation as the in-simulation oracle feed.
OracleFeedRecord sign_observation(const BehaviorObservation& obs, const std::string& oracle_id,
                                  const crypto::KeyPair& oracle_key);

struct TrustParams {
  double alpha = 0.2;
  /// Observations slower than this many ticks count as non-compliant.
  std::uint64_t latency_bound = 10;
};

/// Fraction of compliant observations in a batch, latency folded in.
double compliance_score(const std::vector<BehaviorObservation>& batch, const TrustParams& params);

/// One EMA step: (1 - alpha) * trust + alpha * score, clamped to [0, 1].
double ema_step(double trust, double score, double alpha);

/// The metaverse network as a weighted hypergraph. Edges may share member
/// sets; each keeps its own id and trust. Not safe for concurrent mutation.
class TrustHypergraph {
public:
  explicit TrustHypergraph(TrustParams params = {}) : params_(params) {}

  void add_node(const NodeId& node);
  bool has_node(const NodeId& node) const { return nodes_.contains(node); }
  const std::set<NodeId>& nodes() const { return nodes_; }

  /// Returns a fresh edge id. Throws Error{"unknown-member" | "trust-out-of-range" |
  /// "duplicate-member" | "too-few-members"}.
  EdgeId add_hyperedge(const std::vector<NodeId>& members, double initial_trust);
  /// As above with a caller-chosen id; throws Error{"duplicate-edge-id"} if taken.
  EdgeId add_hyperedge(const EdgeId& id, const std::vector<NodeId>& members, double initial_trust);

  const Hyperedge& edge(const EdgeId& id) const;
  bool has_edge(const EdgeId& id) const { return edges_.contains(id); }
  const std::map<EdgeId, Hyperedge>& edges() const { return edges_; }
  double trust(const EdgeId& id) const { return edge(id).trust; }

  /// Applies one EMA step over the queued oracle records for this edge plus
  /// `obs`. An empty combined batch leaves trust unchanged.
  /// Throws Error{"unknown-edge" | "edge-mismatch"}.
  double update_trust(const EdgeId& id, const std::vector<BehaviorObservation>& obs = {});

  /// Accepts the record into the pending queue iff the oracle is registered,
  /// the signature verifies and the edge exists. Never throws on bad input.
  bool ingest_oracle_record(const OracleFeedRecord& rec, const crypto::KeyDirectory& oracles);
  std::size_t pending(const EdgeId& id) const;

  const TrustParams& params() const { return params_; }

  /// `node <id>` lines followed by `edge <id> <trust> <member,...>` lines.
  void dump(std::ostream& out) const;
  static TrustHypergraph load(std::istream& in, TrustParams params = {});

private:
  TrustParams params_;
  std::set<NodeId> nodes_;
  std::map<EdgeId, Hyperedge> edges_;
  std::map<EdgeId, std::vector<BehaviorObservation>> queue_;
  std::uint64_t next_edge_ = 1;
};

/// Histogram degree -> number of nodes with that degree; degree(v) is the
/// number of hyperedges containing v. Nodes of degree 0 are counted.
std::map<std::size_t, std::size_t> degree_distribution(const TrustHypergraph& g);
std::map<NodeId, std::size_t> node_degrees(const TrustHypergraph& g);

/// Local clustering coefficient of every node in the 2-section (each
/// hyperedge replaced by a clique). Nodes with fewer than two neighbours get 0.
std::map<NodeId, double> clustering_coefficients(const TrustHypergraph& g);

}  // namespace otce::ltm
