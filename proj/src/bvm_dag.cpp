#include "otce/bvm_dag.hpp"

#include <algorithm>
#include <charconv>
#include <memory>
#include <sstream>

namespace otce::bvm {

std::string to_string(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Hash: return "hash";
    case Op::Concat: return "concat";
  }
  return "?";
}

std::optional<Op> parse_op(std::string_view s) {
  for (auto op : {Op::Add, Op::Sub, Op::Mul, Op::Hash, Op::Concat})
    if (s == to_string(op)) return op;
  return std::nullopt;
}

namespace {

Bytes be64(std::uint64_t v) {
  Bytes out(8);
  for (int i = 7; i >= 0; --i, v >>= 8) out[i] = static_cast<std::uint8_t>(v & 0xff);
  return out;
}

std::uint64_t as_u64(const Bytes& b) {
  std::uint64_t v = 0;
  for (auto c : b) v = (v << 8) | c;
  return v;
}

bool valid_id(std::string_view id) {
  if (id.empty() || id.front() == '@') return false;
  return std::none_of(id.begin(), id.end(), [](char c) { return c == ',' || c == ':' || std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

Input Input::ref(TaskId id) { return {Kind::Task, std::move(id), {}, 0}; }
Input Input::integer(std::uint64_t v) { return {Kind::Int, {}, be64(v), v}; }
Input Input::text(std::string_view s) { return {Kind::Str, {}, to_bytes(s), 0}; }
Input Input::chunk(Bytes chunk_id) { return {Kind::Chunk, {}, std::move(chunk_id), 0}; }

std::string Input::str() const {
  switch (kind) {
    case Kind::Task: return task;
    case Kind::Int: return "int:" + std::to_string(number);
    case Kind::Str: return "str:" + otce::to_string(literal);
    case Kind::Chunk: return "chunk:" + to_hex(literal);
  }
  return {};
}

Input parse_input(std::string_view token) {
  auto fail = [&] { return Error("bad-input", std::string(token)); };
  if (token.starts_with("int:")) {
    auto digits = token.substr(4);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) throw fail();
    return Input::integer(v);
  }
  if (token.starts_with("str:")) {
    auto s = token.substr(4);
    if (std::any_of(s.begin(), s.end(), [](char c) { return c == ',' || std::isspace(static_cast<unsigned char>(c)); }))
      throw fail();
    return Input::text(s);
  }
  if (token.starts_with("chunk:")) {
    try {
      auto id = from_hex(token.substr(6));
      if (id.size() != 32) throw fail();
      return Input::chunk(std::move(id));
    } catch (const std::invalid_argument&) {
      throw fail();
    }
  }
  if (!valid_id(token)) throw fail();
  return Input::ref(TaskId(token));
}

std::vector<TaskId> Task::task_inputs() const {
  std::vector<TaskId> out;
  for (const auto& in : inputs)
    if (in.kind == Input::Kind::Task) out.push_back(in.task);
  return out;
}

std::vector<Bytes> Task::chunk_inputs() const {
  std::vector<Bytes> out;
  for (const auto& in : inputs)
    if (in.kind == Input::Kind::Chunk) out.push_back(in.literal);
  return out;
}

DataChunk DataChunk::make(Bytes content, std::set<NodeId> holders) {
  if (holders.empty()) throw Error("no-holder", "a chunk needs at least one holder");
  auto id = crypto::digest_bytes(content);
  return {std::move(id), std::move(content), std::move(holders)};
}

bool DataChunk::intact() const { return !holders.empty() && crypto::digest_bytes(content) == chunk_id; }

ChunkStore::value_type& add_chunk(ChunkStore& store, DataChunk chunk) {
  if (!chunk.intact()) throw Error("corrupt-chunk", to_hex(chunk.chunk_id));
  auto id = chunk.chunk_id;
  auto [it, inserted] = store.emplace(id, std::move(chunk));
  if (!inserted) it->second.holders.insert(chunk.holders.begin(), chunk.holders.end());
  return *it;
}

namespace {
std::string join(const std::vector<TaskId>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
  return out;
}
}  // namespace

CycleError::CycleError(std::vector<TaskId> cycle) : Error("cyclic-dag", "[" + join(cycle) + "]"), cycle_(std::move(cycle)) {}

void TaskDAG::add_task(Task task) {
  if (!valid_id(task.id)) throw Error("bad-task", "invalid task id '" + task.id + "'");
  if (task.inputs.empty()) throw Error("bad-task", task.id + " has no inputs");
  if (tasks_.contains(task.id)) throw Error("duplicate-task", task.id);
  auto id = task.id;
  tasks_.emplace(std::move(id), std::move(task));
}

void TaskDAG::add_output(const TaskId& id) {
  if (!tasks_.contains(id)) throw Error("unknown-task", "output " + id);
  outputs_.insert(id);
}

const Task& TaskDAG::at(const TaskId& id) const {
  auto it = tasks_.find(id);
  if (it == tasks_.end()) throw Error("unknown-task", id);
  return it->second;
}

std::vector<std::pair<TaskId, TaskId>> TaskDAG::edges() const {
  std::set<std::pair<TaskId, TaskId>> out;
  for (const auto& [id, t] : tasks_)
    for (const auto& in : t.task_inputs()) out.emplace(in, id);
  return {out.begin(), out.end()};
}

std::map<TaskId, std::vector<TaskId>> TaskDAG::dependents() const {
  std::map<TaskId, std::vector<TaskId>> out;
  for (const auto& [from, to] : edges()) out[from].push_back(to);
  return out;
}

void TaskDAG::validate() const {
  for (const auto& [id, t] : tasks_)
    for (const auto& in : t.task_inputs())
      if (!tasks_.contains(in)) throw Error("unknown-task", in + " (input of " + id + ")");

  // Iterative DFS from each task along input edges; a grey target closes a cycle.
  enum Color { White, Grey, Black };
  std::map<TaskId, Color> color;
  for (const auto& [root, _] : tasks_) {
    if (color[root] != White) continue;
    std::vector<std::pair<TaskId, std::size_t>> stack{{root, 0}};
    color[root] = Grey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto inputs = tasks_.at(node).task_inputs();
      if (next == inputs.size()) {
        color[node] = Black;
        stack.pop_back();
        continue;
      }
      const auto child = inputs[next++];
      if (color[child] == Grey) {
        // Stack from child to node follows "has input"; reverse it so each
        // element is an input of the next.
        std::vector<TaskId> cycle;
        auto it = std::find_if(stack.begin(), stack.end(), [&](const auto& e) { return e.first == child; });
        for (; it != stack.end(); ++it) cycle.push_back(it->first);
        std::reverse(cycle.begin(), cycle.end());
        std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
        throw CycleError(std::move(cycle));
      }
      if (color[child] == White) {
        color[child] = Grey;
        stack.emplace_back(child, 0);
      }
    }
  }
}

std::vector<std::vector<TaskId>> TaskDAG::layers() const {
  validate();
  std::map<TaskId, std::size_t> depth;
  std::vector<std::vector<TaskId>> out;
  // Repeatedly place tasks whose inputs all have a depth; terminates since acyclic.
  while (depth.size() < tasks_.size()) {
    for (const auto& [id, t] : tasks_) {
      if (depth.contains(id)) continue;
      std::size_t d = 0;
      bool ready = true;
      for (const auto& in : t.task_inputs()) {
        auto it = depth.find(in);
        if (it == depth.end()) {
          ready = false;
          break;
        }
        d = std::max(d, it->second + 1);
      }
      if (ready) depth[id] = d;
    }
  }
  for (const auto& [id, d] : depth) {
    if (out.size() <= d) out.resize(d + 1);
    out[d].push_back(id);
  }
  return out;
}

std::vector<TaskId> TaskDAG::topo_order() const {
  std::vector<TaskId> order;
  for (const auto& layer : layers()) order.insert(order.end(), layer.begin(), layer.end());
  return order;
}

TaskDAG TaskDAG::parse(std::string_view text) {
  TaskDAG dag;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::pair<TaskId, std::size_t>> outputs;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    auto where = "line " + std::to_string(lineno) + ": ";
    try {
      if (tok[0] == "task" && tok.size() == 4) {
        Task t;
        t.id = tok[1];
        auto op = parse_op(tok[2]);
        if (!op) throw Error("dag-parse", "unknown op '" + tok[2] + "'");
        t.op = *op;
        std::string_view rest = tok[3];
        while (true) {
          auto comma = rest.find(',');
          t.inputs.push_back(parse_input(rest.substr(0, comma)));
          if (comma == std::string_view::npos) break;
          rest.remove_prefix(comma + 1);
        }
        dag.add_task(std::move(t));
      } else if (tok[0] == "output" && tok.size() == 2) {
        outputs.emplace_back(tok[1], lineno);
      } else {
        throw Error("dag-parse", "expected 'task <id> <op> <inputs>' or 'output <id>'");
      }
    } catch (const Error& e) {
      throw Error("dag-parse", where + e.what());
    }
  }
  for (const auto& [id, lineno] : outputs) {
    if (!dag.tasks_.contains(id)) throw Error("dag-parse", "line " + std::to_string(lineno) + ": unknown output " + id);
    dag.outputs_.insert(id);
  }
  return dag;
}

std::string TaskDAG::to_text() const {
  std::ostringstream out;
  for (const auto& [id, t] : tasks_) {
    out << "task " << id << ' ' << to_string(t.op) << ' ';
    for (std::size_t i = 0; i < t.inputs.size(); ++i) out << (i ? "," : "") << t.inputs[i].str();
    out << '\n';
  }
  for (const auto& id : outputs_) out << "output " << id << '\n';
  return out.str();
}

Bytes apply_op(Op op, const std::vector<Bytes>& inputs) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      std::uint64_t acc = inputs.empty() ? 0 : as_u64(inputs[0]);
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        const auto v = as_u64(inputs[i]);
        acc = op == Op::Add ? acc + v : op == Op::Sub ? acc - v : acc * v;
      }
      return be64(acc);
    }
    case Op::Hash:
    case Op::Concat: {
      Bytes all;
      for (const auto& b : inputs) all.insert(all.end(), b.begin(), b.end());
      return op == Op::Hash ? crypto::digest_bytes(all) : all;
    }
  }
  return {};
}

Bytes literal_value(const Input& in, const ChunkStore& chunks) {
  if (in.kind != Input::Kind::Chunk) return in.literal;
  auto it = chunks.find(in.literal);
  if (it == chunks.end()) throw Error("unknown-chunk", to_hex(in.literal));
  if (!it->second.intact()) throw Error("corrupt-chunk", to_hex(in.literal));
  return it->second.content;
}

namespace {
Bytes evaluate(const Task& t, const std::map<TaskId, Bytes>& known, const ChunkStore& chunks) {
  std::vector<Bytes> args;
  args.reserve(t.inputs.size());
  for (const auto& in : t.inputs)
    args.push_back(in.kind == Input::Kind::Task ? known.at(in.task) : literal_value(in, chunks));
  return apply_op(t.op, args);
}
}  // namespace

Outputs sequential_oracle(const TaskDAG& dag, const ChunkStore& chunks) {
  std::map<TaskId, Bytes> values;
  for (const auto& id : dag.topo_order()) values[id] = evaluate(dag.at(id), values, chunks);
  Outputs out;
  for (const auto& id : dag.outputs()) out[id] = values.at(id);
  return out;
}

Assignment topo_schedule(const TaskDAG& dag, const std::vector<NodeId>& group, const ChunkStore& chunks) {
  if (group.empty()) throw Error("empty-group", "no executors");
  std::vector<NodeId> members(group);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());

  Assignment a;
  a.layers = dag.layers();
  for (const auto& layer : a.layers) {
    std::size_t rr = 0;
    for (const auto& id : layer) {
      std::map<NodeId, std::size_t> held;
      for (const auto& c : dag.at(id).chunk_inputs())
        if (auto it = chunks.find(c); it != chunks.end())
          for (const auto& h : it->second.holders)
            if (std::binary_search(members.begin(), members.end(), h)) ++held[h];
      if (!held.empty()) {
        // std::map iterates ids ascending, so max_element keeps the smallest on ties.
        a.executor[id] = std::max_element(held.begin(), held.end(), [](const auto& x, const auto& y) {
                           return x.second < y.second;
                         })->first;
      } else {
        a.executor[id] = members[rr++ % members.size()];
      }
    }
  }
  return a;
}

namespace {

const NodeId kCollector{"@collector"};
constexpr const char* kStart = "bvm-start";
constexpr const char* kResult = "bvm-result";

Bytes encode_result(const TaskId& id, const Bytes& value) {
  Encoder enc;
  enc.str(id).bytes(value);
  return std::move(enc).take();
}

std::pair<TaskId, Bytes> decode_result(ByteView payload) {
  Decoder dec(payload);
  auto id = dec.str();
  auto value = dec.bytes();
  dec.expect_done();
  return {std::move(id), std::move(value)};
}

class Executor : public sim::Process {
public:
  Executor(NodeId self, const TaskDAG& dag, const Assignment& a, const ChunkStore& chunks,
           const std::map<TaskId, std::vector<TaskId>>& dependents, const sim::Network& net,
           std::map<TaskId, TaskRun>& runs)
      : self_(std::move(self)), dag_(dag), a_(a), chunks_(chunks), dependents_(dependents), net_(net), runs_(runs) {
    for (const auto& layer : a.layers)
      for (const auto& id : layer)
        if (a.executor.at(id) == self_) queue_.push_back(id);
  }

  sim::StepOutput on_message(const NodeId&, const Bytes& payload, const std::string& kind) override {
    if (kind == kStart) {
      started_ = true;
    } else if (kind == kResult) {
      try {
        auto [id, value] = decode_result(payload);
        if (dag_.tasks().contains(id)) known_.emplace(std::move(id), std::move(value));
      } catch (const DecodeError&) {
      }
    }
    sim::StepOutput out;
    try_start(out);
    return out;
  }

  sim::StepOutput on_timer(std::uint64_t) override {
    sim::StepOutput out;
    if (!busy_) return out;
    const auto id = *busy_;
    busy_.reset();
    auto value = evaluate(dag_.at(id), known_, chunks_);
    runs_[id].finished = net_.now();
    out.records.push_back("TASK-DONE " + id + ' ' + self_.str() + ' ' + sim::payload_digest(value));

    std::set<NodeId> targets;
    if (auto it = dependents_.find(id); it != dependents_.end())
      for (const auto& d : it->second) targets.insert(a_.executor.at(d));
    targets.erase(self_);
    if (dag_.outputs().contains(id)) targets.insert(kCollector);
    const auto wire = encode_result(id, value);
    for (const auto& t : targets) out.messages.push_back({t, wire, kResult});
    known_[id] = std::move(value);
    try_start(out);
    return out;
  }

private:
  void try_start(sim::StepOutput& out) {
    if (busy_ || !started_) return;
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
      const auto inputs = dag_.at(*it).task_inputs();
      if (!std::all_of(inputs.begin(), inputs.end(), [&](const TaskId& in) { return known_.contains(in); })) continue;
      busy_ = *it;
      queue_.erase(it);
      runs_[*busy_] = TaskRun{self_, net_.now(), 0};
      out.records.push_back("TASK-START " + *busy_ + ' ' + self_.str());
      out.timers.push_back({1, ++timer_});
      return;
    }
  }

  NodeId self_;
  const TaskDAG& dag_;
  const Assignment& a_;
  const ChunkStore& chunks_;
  const std::map<TaskId, std::vector<TaskId>>& dependents_;
  const sim::Network& net_;
  std::map<TaskId, TaskRun>& runs_;
  std::vector<TaskId> queue_;  // own tasks in schedule order
  std::map<TaskId, Bytes> known_;
  std::optional<TaskId> busy_;
  bool started_ = false;
  std::uint64_t timer_ = 0;
};

class Collector : public sim::Process {
public:
  explicit Collector(Outputs& sink) : sink_(sink) {}
  sim::StepOutput on_message(const NodeId&, const Bytes& payload, const std::string& kind) override {
    if (kind == kResult) {
      try {
        auto [id, value] = decode_result(payload);
        sink_.emplace(std::move(id), std::move(value));
      } catch (const DecodeError&) {
      }
    }
    return {};
  }
  sim::StepOutput on_timer(std::uint64_t) override { return {}; }

private:
  Outputs& sink_;
};

struct Attempt {
  Outputs outputs;
  std::map<TaskId, TaskRun> runs;
  sim::Trace trace;
  sim::Metrics metrics;
};

Attempt run_once(const TaskDAG& dag, const Assignment& a, const std::vector<NodeId>& members, const ChunkStore& chunks,
                 const ExecutionConfig& cfg) {
  Attempt at;
  const auto dependents = dag.dependents();
  sim::Network net(cfg.net, cfg.instance_id);
  std::vector<std::unique_ptr<Executor>> execs;
  for (const auto& m : members) {
    execs.push_back(std::make_unique<Executor>(m, dag, a, chunks, dependents, net, at.runs));
    net.add_node(m, *execs.back());
  }
  Collector collector(at.outputs);
  net.add_node(kCollector, collector);
  for (const auto& f : cfg.faults) net.inject_fault(f);
  for (const auto& m : members) net.inject(0, m, {}, kStart);
  at.trace = net.run_until(cfg.max_ticks);
  at.metrics = net.metrics();
  return at;
}

bool complete(const TaskDAG& dag, const Attempt& at) {
  if (at.outputs.size() != dag.outputs().size()) return false;
  return std::all_of(dag.tasks().begin(), dag.tasks().end(), [&](const auto& kv) {
    auto it = at.runs.find(kv.first);
    return it != at.runs.end() && it->second.finished > 0;
  });
}

}  // namespace

bool ExecutionReport::respects_dependencies(const TaskDAG& dag) const {
  for (const auto& [id, t] : dag.tasks()) {
    auto run = runs.find(id);
    if (run == runs.end()) return false;
    for (const auto& in : t.task_inputs()) {
      auto dep = runs.find(in);
      if (dep == runs.end() || run->second.started < dep->second.finished) return false;
    }
  }
  return true;
}

std::string ExecutionReport::trace_text() const {
  std::string out;
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    out += "# attempt " + std::to_string(i + 1) + "\n";
    out += attempts[i].text();
  }
  return out;
}

ExecutionReport execute_collaborative(const TaskDAG& dag, const Assignment& assignment,
                                      const std::vector<NodeId>& group, const ChunkStore& chunks,
                                      const ExecutionConfig& cfg) {
  std::vector<NodeId> members(group);
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  for (const auto& [id, who] : assignment.executor)
    if (!std::binary_search(members.begin(), members.end(), who))
      throw Error("bad-assignment", id + " assigned to non-member " + who.str());
  for (const auto& [id, _] : dag.tasks())
    if (!assignment.executor.contains(id)) throw Error("bad-assignment", id + " unassigned");

  ExecutionReport report;
  report.assignment = assignment;
  auto attempt = run_once(dag, report.assignment, members, chunks, cfg);
  report.attempts.push_back(attempt.trace);

  if (!complete(dag, attempt)) {
    std::set<NodeId> crashed;
    for (const auto& f : cfg.faults)
      if (f.behavior == sim::Behavior::Crash && (!f.scope || *f.scope == cfg.instance_id)) crashed.insert(f.node);
    bool reassigned = false;
    bool stranded = false;
    for (auto& [id, who] : report.assignment.executor) {
      if (!crashed.contains(who)) continue;
      auto pos = std::find(members.begin(), members.end(), who) - members.begin();
      std::optional<NodeId> next;
      for (std::size_t k = 1; k < members.size() && !next; ++k) {
        const auto& cand = members[(pos + k) % members.size()];
        if (!crashed.contains(cand)) next = cand;
      }
      if (!next) {
        stranded = true;
        break;
      }
      who = *next;
      reassigned = true;
    }
    if (reassigned && !stranded) {
      report.retried = true;
      attempt = run_once(dag, report.assignment, members, chunks, cfg);
      report.attempts.push_back(attempt.trace);
    }
    report.failed = !complete(dag, attempt);
  }

  report.outputs = std::move(attempt.outputs);
  report.runs = std::move(attempt.runs);
  report.metrics = attempt.metrics;
  for (const auto& [_, r] : report.runs) report.finish_tick = std::max(report.finish_tick, r.finished);
  return report;
}

Bytes outputs_digest(const Outputs& outputs) {
  Encoder enc;
  enc.str("bvm-outputs").u32(static_cast<std::uint32_t>(outputs.size()));
  for (const auto& [id, v] : outputs) enc.str(id).bytes(v);
  return crypto::digest_bytes(enc.data());
}

VerificationReport verify_results(const Outputs& outputs, const TaskDAG& dag, const ChunkStore& chunks,
                                  const std::vector<Verifier>& verifiers, std::size_t threshold,
                                  const registry::Eid& eid, const crypto::KeyDirectory& directory) {
  if (threshold == 0 || threshold > verifiers.size())
    throw Error("bad-threshold", std::to_string(threshold) + " of " + std::to_string(verifiers.size()));

  VerificationReport report;
  report.submission.eid = eid;
  const auto claimed = outputs_digest(outputs);

  // Recompute first: members that agree post the claimed digest.
  std::vector<const Verifier*> honest_match;
  for (const auto& v : verifiers) {
    if (v.byzantine) continue;
    if (outputs_digest(sequential_oracle(dag, chunks)) == claimed) {
      honest_match.push_back(&v);
      report.submission.digests[v.node] = claimed;
    } else {
      report.refused.push_back(v.node);
    }
  }

  const auto message = report.submission.signing_message();
  for (const auto* v : honest_match) add_quorum_signature(report.submission, v->node, *v->key);
  for (const auto& v : verifiers) {
    if (!v.byzantine) continue;
    auto forged = report.submission;
    auto tampered = outputs;
    tampered["@forged"] = to_bytes(v.node.str());
    forged.digests[v.node] = outputs_digest(tampered);
    report.submission.quorum_sigs.push_back({v.node, v.key->sign(forged.signing_message())});
  }

  std::set<NodeId> valid;
  for (const auto& q : report.submission.quorum_sigs)
    if (directory.verify(q.signer, message, q.signature)) valid.insert(q.signer);
  report.valid_signatures = valid.size();
  report.accepted = valid.size() >= threshold;
  return report;
}

}  // namespace otce::bvm
