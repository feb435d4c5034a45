#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "otce/crypto.hpp"
#include "otce/otce_registry.hpp"
#include "otce/simnet.hpp"

namespace otce::bvm {

using TaskId = std::string;

/// Pure built-in operations. Arithmetic reads each input as a big-endian
/// integer modulo 2^64 and yields 8 bytes; hash is SHA-256 over the
/// concatenated inputs.
enum class Op { Add, Sub, Mul, Hash, Concat };

std::string to_string(Op op);
std::optional<Op> parse_op(std::string_view s);

/// A task input: another task's output or a literal. Literal forms in the
/// text format are `int:N`, `str:text` and `chunk:<hex id>`.
struct Input {
  enum class Kind { Task, Int, Str, Chunk };
  Kind kind = Kind::Task;
  TaskId task;      // Kind::Task
  Bytes literal;    // Int (8 bytes BE), Str, or the chunk id for Chunk
  std::uint64_t number = 0;

  static Input ref(TaskId id);
  static Input integer(std::uint64_t v);
  static Input text(std::string_view s);
  static Input chunk(Bytes chunk_id);

  std::string str() const;
  bool operator==(const Input&) const = default;
};

/// Throws Error{"bad-input"}.
Input parse_input(std::string_view token);

struct Task {
  TaskId id;
  Op op = Op::Concat;
  std::vector<Input> inputs;

  std::vector<TaskId> task_inputs() const;
  std::vector<Bytes> chunk_inputs() const;
};

struct DataChunk {
  Bytes chunk_id;
  Bytes content;
  std::set<NodeId> holders;

  static DataChunk make(Bytes content, std::set<NodeId> holders);
  bool intact() const;
};

/// Content-addressed chunk store keyed by chunk id.
using ChunkStore = std::map<Bytes, DataChunk>;

ChunkStore::value_type& add_chunk(ChunkStore& store, DataChunk chunk);

/// Raised for cyclic graphs; `cycle` lists task ids such that each one is an
/// input of the next and the last is an input of the first.
class CycleError : public Error {
public:
  explicit CycleError(std::vector<TaskId> cycle);
  const std::vector<TaskId>& cycle() const { return cycle_; }

private:
  std::vector<TaskId> cycle_;
};

class TaskDAG {
public:
  /// Throws Error{"duplicate-task" | "bad-task"}.
  void add_task(Task task);
  /// Throws Error{"unknown-task"}.
  void add_output(const TaskId& id);

  const std::map<TaskId, Task>& tasks() const { return tasks_; }
  const std::set<TaskId>& outputs() const { return outputs_; }
  bool empty() const { return tasks_.empty(); }
  const Task& at(const TaskId& id) const;

  /// Dependency pairs (producer, consumer), sorted.
  std::vector<std::pair<TaskId, TaskId>> edges() const;
  /// Consumers of each task's output.
  std::map<TaskId, std::vector<TaskId>> dependents() const;

  /// Throws Error{"unknown-task"} for dangling references and CycleError.
  void validate() const;
  /// Tasks grouped by depth (longest path from a source); ids sorted within
  /// a layer. Throws like validate().
  std::vector<std::vector<TaskId>> layers() const;
  std::vector<TaskId> topo_order() const;

  /// Line format: `task <id> <op> <input,...>` and `output <id>`. Blank lines
  /// and `#` comments are ignored. Throws Error{"dag-parse"} with the line
  /// number; references are checked by validate().
  static TaskDAG parse(std::string_view text);
  std::string to_text() const;

private:
  std::map<TaskId, Task> tasks_;
  std::set<TaskId> outputs_;
};

/// Evaluates one task given its resolved input values.
Bytes apply_op(Op op, const std::vector<Bytes>& inputs);

/// Resolves a literal input. Throws Error{"unknown-chunk" | "corrupt-chunk"}.
Bytes literal_value(const Input& in, const ChunkStore& chunks);

using Outputs = std::map<TaskId, Bytes>;

/// Single-threaded evaluation in topological order.
Outputs sequential_oracle(const TaskDAG& dag, const ChunkStore& chunks);

struct Assignment {
  std::map<TaskId, NodeId> executor;
  std::vector<std::vector<TaskId>> layers;
};

/// Layer-by-layer allocation. Tasks reading chunks go to the group member
/// holding most of them (smallest id on ties); the rest of each layer is
/// dealt round-robin over the sorted group. Throws Error{"empty-group"} and
/// CycleError.
Assignment topo_schedule(const TaskDAG& dag, const std::vector<NodeId>& group, const ChunkStore& chunks);

struct TaskRun {
  NodeId executor;
  Tick started = 0;
  Tick finished = 0;
};

struct ExecutionReport {
  Outputs outputs;
  std::map<TaskId, TaskRun> runs;
  /// Simnet trace of the final attempt, preceded by earlier attempts.
  std::vector<sim::Trace> attempts;
  Assignment assignment;  // as used by the final attempt
  bool retried = false;
  bool failed = false;
  Tick finish_tick = 0;  // latest task completion
  sim::Metrics metrics;

  /// Every task started no earlier than all its inputs finished.
  bool respects_dependencies(const TaskDAG& dag) const;
  std::string trace_text() const;
};

struct ExecutionConfig {
  sim::NetworkConfig net;
  std::vector<sim::FaultSpec> faults;
  Tick max_ticks = 10000;
  std::string instance_id = "bvm";
};

/// Runs the DAG on a fresh simulated network: every executor evaluates its
/// tasks one at a time at unit cost as inputs arrive and forwards results
/// to the executors of dependent tasks. If a crashed executor leaves the run
/// incomplete, its tasks move to the next live member and the whole DAG is
/// run once more; a second incomplete run is marked failed.
ExecutionReport execute_collaborative(const TaskDAG& dag, const Assignment& assignment,
                                      const std::vector<NodeId>& group, const ChunkStore& chunks,
                                      const ExecutionConfig& cfg);

/// Canonical digest of an output map.
Bytes outputs_digest(const Outputs& outputs);

struct Verifier {
  NodeId node;
  const crypto::KeyPair* key = nullptr;
  /// Signs a digest of tampered outputs instead of recomputing.
  bool byzantine = false;
};

struct VerificationReport {
  bool accepted = false;
  std::size_t valid_signatures = 0;
  std::vector<NodeId> refused;
  registry::ResultSubmission submission;
};

/// Each honest verifier recomputes the outputs and signs the submission on a
/// match. Accepted iff at least `threshold` signatures verify against the
/// submission built from the claimed outputs. Throws Error{"bad-threshold"}.
VerificationReport verify_results(const Outputs& outputs, const TaskDAG& dag, const ChunkStore& chunks,
                                  const std::vector<Verifier>& verifiers, std::size_t threshold,
                                  const registry::Eid& eid, const crypto::KeyDirectory& directory);

}  // namespace otce::bvm
