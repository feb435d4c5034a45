#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "otce/bytes.hpp"
#include "otce/types.hpp"

namespace otce::sim {

/// External sender for client inputs injected into a run.
inline const NodeId kClient{"@client"};

struct NetworkConfig {
  Tick delay_min = 1;
  Tick delay_max = 1;
  /// After gst every delay is at most delay_max and nothing is dropped.
  /// Messages sent earlier arrive no later than gst + delay_max.
  std::optional<Tick> gst;
  /// Drop probability before gst (or always, when gst is absent).
  double drop_rate = 0.0;
  /// Upper delay bound before gst, or always when gst is absent.
  /// Zero means "same as delay_max".
  Tick async_delay_max = 0;
  std::uint64_t seed = 0;

  /// Throws Error{"invalid-network-config"}.
  void validate() const;
  Tick pre_gst_max() const { return std::max(delay_max, async_delay_max); }
};

enum class Behavior { Crash, DropAll, Equivocate, DelayMax };

std::string to_string(Behavior b);
std::optional<Behavior> parse_behavior(std::string_view s);

struct FaultSpec {
  NodeId node;
  Behavior behavior = Behavior::Crash;
  /// Crash: the crash tick. Others: tick from which the behavior applies.
  Tick start = 0;
  /// Instance id the fault is limited to; nullopt means every instance.
  std::optional<std::string> scope;
};

struct Outbound {
  NodeId to;
  Bytes payload;
  std::string kind;
};

struct TimerRequest {
  Tick delay = 1;
  std::uint64_t id = 0;
};

/// What a node produces in response to one event. `records` become trace
/// lines prefixed with the current tick.
struct StepOutput {
  std::vector<Outbound> messages;
  std::vector<TimerRequest> timers;
  std::vector<std::string> records;

  void append(StepOutput other);
};

/// A simulated node. Nodes never observe the global tick.
class Process {
public:
  virtual ~Process() = default;
  virtual StepOutput on_message(const NodeId& from, const Bytes& payload, const std::string& kind) = 0;
  virtual StepOutput on_timer(std::uint64_t id) = 0;
};

/// Rewrites a faulty sender's message for one recipient; nullopt keeps it.
using Equivocator = std::function<std::optional<Outbound>(const NodeId& sender, const Outbound& msg)>;

struct SimEvent {
  enum class Type : std::uint8_t { Message, Timer };

  Tick deliver_at = 0;
  std::uint64_t seq = 0;
  Type type = Type::Message;
  NodeId from;
  NodeId to;
  Bytes payload;
  std::string kind;
  std::uint64_t timer_id = 0;
  Tick sent_at = 0;
};

struct Metrics {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t equivocated = 0;
  std::uint64_t timers_fired = 0;
  std::uint64_t faults_injected = 0;
};

enum class RunStatus { Quiescent, BudgetExhausted };

struct Trace {
  std::vector<std::string> lines;
  RunStatus status = RunStatus::Quiescent;
  Tick end_tick = 0;

  std::string text() const;
};

/// Deterministic discrete-event network. Events are processed in
/// (deliver_at, seq) order; every random draw comes from one seeded engine.
/// Single-threaded; independent instances may run concurrently.
class Network {
public:
  explicit Network(NetworkConfig cfg, std::string instance_id = "");

  /// The process must outlive the network.
  void add_node(const NodeId& id, Process& process);
  bool has_node(const NodeId& id) const { return nodes_.contains(id); }
  const std::vector<NodeId>& node_order() const { return order_; }

  void set_equivocator(Equivocator eq) { equivocator_ = std::move(eq); }

  /// Faults scoped to another instance are ignored. Throws
  /// Error{"unknown-node" | "conflicting-fault"}.
  void inject_fault(const FaultSpec& spec);
  const std::vector<FaultSpec>& faults() const { return faults_; }
  std::optional<Behavior> behavior_of(const NodeId& node, Tick at) const;
  bool crashed(const NodeId& node, Tick at) const;

  /// Schedules a message from `from` at the current tick, applying drops,
  /// delays and sender faults. Returns the scheduled event or nullopt if it
  /// was dropped. Throws Error{"unknown-node"}.
  std::optional<SimEvent> send(const NodeId& from, const Outbound& msg);

  /// Delivers a client input at `at`, bypassing drops and faults.
  void inject(Tick at, const NodeId& to, Bytes payload, std::string kind);

  /// Runs until the queue is empty or the next event is past max_tick.
  Trace run_until(Tick max_tick);

  Tick now() const { return now_; }
  const Metrics& metrics() const { return metrics_; }
  const std::string& instance_id() const { return instance_; }

private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return std::tie(a.deliver_at, a.seq) > std::tie(b.deliver_at, b.seq);
    }
  };

  void schedule(SimEvent ev);
  void dispatch(const NodeId& node, StepOutput out, Trace& trace);
  std::optional<SimEvent> send_one(const NodeId& from, const Outbound& msg, Trace* trace);
  Tick draw_delay(const NodeId& from);
  bool applies(const FaultSpec& spec) const;

  NetworkConfig cfg_;
  std::string instance_;
  std::mt19937_64 rng_;
  std::map<NodeId, Process*> nodes_;
  std::vector<NodeId> order_;
  std::vector<FaultSpec> faults_;
  Equivocator equivocator_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::vector<std::string> pending_lines_;
  std::uint64_t next_seq_ = 0;
  Tick now_ = 0;
  Metrics metrics_;
};

/// First 8 bytes of SHA-256, hex; the digest column of trace lines.
std::string payload_digest(ByteView payload);

}  // namespace otce::sim
