#include "otce/hypergraph.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace otce::ltm {

Bytes BehaviorObservation::encode() const {
  Encoder enc;
  enc.str("obs").str(subject.str()).str(edge_id).u8(compliant ? 1 : 0).u64(latency).u64(observed_at);
  return std::move(enc).take();
}

OracleFeedRecord sign_observation(const BehaviorObservation& obs, const std::string& oracle_id,
                                  const crypto::KeyPair& oracle_key) {
  return OracleFeedRecord{obs, oracle_id, oracle_key.sign(obs.encode())};
}

double compliance_score(const std::vector<BehaviorObservation>& batch, const TrustParams& params) {
  if (batch.empty()) return 0.0;
  auto good = std::count_if(batch.begin(), batch.end(), [&](const BehaviorObservation& o) {
    return o.compliant && o.latency <= params.latency_bound;
  });
  return static_cast<double>(good) / static_cast<double>(batch.size());
}

double ema_step(double trust, double score, double alpha) {
  return std::clamp((1.0 - alpha) * trust + alpha * score, 0.0, 1.0);
}

void TrustHypergraph::add_node(const NodeId& node) {
  if (node.empty()) throw Error("invalid-node", "empty node id");
  nodes_.insert(node);
}

EdgeId TrustHypergraph::add_hyperedge(const std::vector<NodeId>& members, double initial_trust) {
  EdgeId id;
  do {
    id = "e" + std::to_string(next_edge_++);
  } while (edges_.contains(id));
  return add_hyperedge(id, members, initial_trust);
}

EdgeId TrustHypergraph::add_hyperedge(const EdgeId& id, const std::vector<NodeId>& members,
                                      double initial_trust) {
  if (id.empty() || id.find_first_of(" \t\n") != std::string::npos)
    throw Error("invalid-edge-id", "'" + id + "'");
  if (edges_.contains(id)) throw Error("duplicate-edge-id", id);
  if (!(initial_trust >= 0.0 && initial_trust <= 1.0))
    throw Error("trust-out-of-range", std::to_string(initial_trust));
  for (const auto& m : members)
    if (!nodes_.contains(m)) throw Error("unknown-member", m.str());
  std::vector<NodeId> sorted = members;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error("duplicate-member", id);
  if (sorted.size() < 2) throw Error("too-few-members", id);
  edges_.emplace(id, Hyperedge{id, std::move(sorted), initial_trust});
  return id;
}

const Hyperedge& TrustHypergraph::edge(const EdgeId& id) const {
  auto it = edges_.find(id);
  if (it == edges_.end()) throw Error("unknown-edge", id);
  return it->second;
}

double TrustHypergraph::update_trust(const EdgeId& id, const std::vector<BehaviorObservation>& obs) {
  auto it = edges_.find(id);
  if (it == edges_.end()) throw Error("unknown-edge", id);
  for (const auto& o : obs)
    if (o.edge_id != id) throw Error("edge-mismatch", o.edge_id + " != " + id);

  std::vector<BehaviorObservation> batch;
  if (auto q = queue_.find(id); q != queue_.end()) {
    batch = std::move(q->second);
    queue_.erase(q);
  }
  batch.insert(batch.end(), obs.begin(), obs.end());
  if (batch.empty()) return it->second.trust;

  it->second.trust = ema_step(it->second.trust, compliance_score(batch, params_), params_.alpha);
  return it->second.trust;
}

bool TrustHypergraph::ingest_oracle_record(const OracleFeedRecord& rec, const crypto::KeyDirectory& oracles) {
  if (!oracles.verify(NodeId(rec.oracle_id), rec.payload.encode(), rec.signature)) return false;
  if (!edges_.contains(rec.payload.edge_id)) return false;
  queue_[rec.payload.edge_id].push_back(rec.payload);
  return true;
}

std::size_t TrustHypergraph::pending(const EdgeId& id) const {
  auto it = queue_.find(id);
  return it == queue_.end() ? 0 : it->second.size();
}

void TrustHypergraph::dump(std::ostream& out) const {
  for (const auto& n : nodes_) out << "node " << n << '\n';
  for (const auto& [id, e] : edges_) {
    out << "edge " << id << ' ' << std::setprecision(17) << e.trust << ' ';
    for (std::size_t i = 0; i < e.members.size(); ++i) out << (i ? "," : "") << e.members[i];
    out << '\n';
  }
}

TrustHypergraph TrustHypergraph::load(std::istream& in, TrustParams params) {
  TrustHypergraph g(params);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind.starts_with('#')) continue;
    auto where = " (line " + std::to_string(lineno) + ")";
    if (kind == "node") {
      std::string id;
      if (!(ls >> id)) throw Error("parse-error", "node line without id" + where);
      g.add_node(NodeId(id));
    } else if (kind == "edge") {
      std::string id, trust_text, member_text;
      if (!(ls >> id >> trust_text >> member_text)) throw Error("parse-error", "malformed edge" + where);
      double trust = 0.0;
      auto [ptr, ec] = std::from_chars(trust_text.data(), trust_text.data() + trust_text.size(), trust);
      if (ec != std::errc{} || ptr != trust_text.data() + trust_text.size())
        throw Error("parse-error", "bad trust value" + where);
      std::vector<NodeId> members;
      std::istringstream ms(member_text);
      for (std::string m; std::getline(ms, m, ',');) members.emplace_back(m);
      g.add_hyperedge(id, members, trust);
    } else {
      throw Error("parse-error", "unknown record '" + kind + "'" + where);
    }
  }
  return g;
}

std::map<NodeId, std::size_t> node_degrees(const TrustHypergraph& g) {
  std::map<NodeId, std::size_t> deg;
  for (const auto& n : g.nodes()) deg[n] = 0;
  for (const auto& [id, e] : g.edges())
    for (const auto& m : e.members) ++deg[m];
  return deg;
}

std::map<std::size_t, std::size_t> degree_distribution(const TrustHypergraph& g) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& [node, d] : node_degrees(g)) ++hist[d];
  return hist;
}

std::map<NodeId, double> clustering_coefficients(const TrustHypergraph& g) {
  std::map<NodeId, std::set<NodeId>> adj;
  for (const auto& n : g.nodes()) adj[n];
  for (const auto& [id, e] : g.edges())
    for (const auto& u : e.members)
      for (const auto& v : e.members)
        if (u != v) adj[u].insert(v);

  std::map<NodeId, double> cc;
  for (const auto& [node, nbrs] : adj) {
    const auto k = nbrs.size();
    if (k < 2) {
      cc[node] = 0.0;
      continue;
    }
    std::size_t links = 0;
    for (auto a = nbrs.begin(); a != nbrs.end(); ++a) {
      const auto& na = adj.at(*a);
      for (auto b = std::next(a); b != nbrs.end(); ++b)
        if (na.contains(*b)) ++links;
    }
    cc[node] = static_cast<double>(2 * links) / static_cast<double>(k * (k - 1));
  }
  return cc;
}

}  // namespace otce::ltm
