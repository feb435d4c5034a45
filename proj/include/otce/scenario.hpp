#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "otce/bvm_dag.hpp"
#include "otce/did_registry.hpp"
#include "otce/hypergraph.hpp"
#include "otce/instance.hpp"
#include "otce/ledger.hpp"
#include "otce/otce_registry.hpp"

namespace otce::scenario {

struct EdgeSpec {
  std::string id;
  std::vector<NodeId> members;
  double trust = 0.0;
};

struct ChunkSpec {
  std::string name;
  Bytes content;
  std::vector<NodeId> holders;
};

/// Fault bound to the consensus and DAG runs of one OTCE (all when empty).
struct ScenarioFault {
  sim::FaultSpec spec;
  std::string otce;
};

/// One scripted step. Only the fields relevant to `type` are set.
struct Action {
  std::string type;
  std::size_t line = 0;

  std::string otce;   // OTCE label
  NodeId by;          // sender; empty means the first group member
  NodeId node;
  std::string edge;
  std::vector<NodeId> group;
  std::optional<std::vector<double>> tv;
  std::uint64_t delta_t = 0;
  std::uint64_t count = 1;  // seal
  Height height = 0;        // seal_until
  std::string request;
  std::string context;
  std::map<std::string, std::string> attributes;
  // observe
  NodeId subject;
  std::string oracle;
  bool compliant = true;
  std::uint64_t latency = 0;
  // run_dag
  std::string dag_text;
  std::vector<NodeId> byzantine_verifiers;
  std::vector<sim::FaultSpec> dag_faults;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  Tick max_ticks = 5000;
  Tick view_timeout = 20;
  std::vector<NodeId> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<std::string> oracles;
  sim::NetworkConfig network;
  std::vector<ScenarioFault> faults;
  PlanMapping mapping;
  ltm::TrustParams trust;
  did::AttestationPolicy policy;
  std::vector<ChunkSpec> chunks;
  std::vector<Action> script;
  /// Source text, copied next to run outputs so a dump can be replayed.
  std::string source;
};

/// Validation failure carrying every problem found, each with its line.
class ScenarioError : public Error {
public:
  explicit ScenarioError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

private:
  std::vector<std::string> problems_;
};

/// Throws ScenarioError (codes in the messages: parse-error, missing-seed,
/// undefined-node, undefined-edge, undefined-otce, ...).
Scenario load_scenario_text(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

struct OtceMetrics {
  std::string eid;
  std::string state;
  std::string cause;
  std::uint64_t blocks_alive = 0;
  std::uint64_t consensus_runs = 0;
  std::uint64_t decisions = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_delivered = 0;
  std::uint64_t messages_dropped = 0;
  std::uint64_t messages_in_flight = 0;
  std::uint64_t faults_injected = 0;
  std::uint64_t stalled_runs = 0;
  std::uint64_t dag_runs = 0;
  std::uint64_t dag_mismatches = 0;
  std::vector<std::string> safety_flags;
  std::vector<std::string> plan_history;  // "<protocol>@<height>"
};

struct MetricsReport {
  std::map<std::string, OtceMetrics> otces;  // by label
  std::uint64_t seed = 0;
  Tick total_ticks = 0;
  Height chain_height = 0;
  bool replay_equivalent = false;
  std::uint64_t failed_txs = 0;
  std::uint64_t budget_exhausted = 0;
  std::map<std::string, double> trust;  // final trust per edge
  std::uint64_t dids = 0;

  bool conserved() const;
  /// `key=value` lines in a fixed order.
  std::string to_text() const;
};

struct RunResult {
  MetricsReport metrics;
  ledger::Chain chain;
  std::string trace;
  std::string otce_dump;
  std::string did_dump;
  std::string trust_dump;
};

struct RunOptions {
  std::optional<std::uint64_t> seed_override;
  std::optional<Tick> max_ticks;
};

/// Executes the script, then replays the chain against fresh contracts and
/// records whether the final state matches. Harness problems throw Error;
/// protocol outcomes only show up in the report.
RunResult run_scenario(Scenario s, const RunOptions& opts = {});

/// Writes chain.dump, trace.log, metrics.txt, otce.dump, did.dump,
/// trust.dump and scenario.yaml into `out_dir`.
void write_outputs(const RunResult& r, const Scenario& s, const std::filesystem::path& out_dir);

struct ReplayReport {
  std::optional<Height> bad_height;      // verify_chain
  std::optional<Height> divergence;      // re-execution mismatch
  std::string otce_dump;
  std::string did_dump;
};

/// Verifies and re-executes a chain with contracts configured from `s`.
ReplayReport replay_chain(const ledger::Chain& chain, const Scenario& s);

}  // namespace otce::scenario
