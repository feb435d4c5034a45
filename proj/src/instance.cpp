#include "otce/instance.hpp"

#include <algorithm>

namespace otce::consensus {

bool InstanceOutcome::violation() const {
  return std::any_of(safety_flags.begin(), safety_flags.end(),
                     [](const std::string& f) { return f != "fault-bound-exceeded"; });
}

std::optional<Tick> InstanceOutcome::last_decision_tick() const {
  std::optional<Tick> last;
  for (const auto& d : decisions)
    if (!faulty.contains(d.node)) last = std::max(last.value_or(0), d.decided_at);
  return last;
}

ReplicaProcess::ReplicaProcess(const ConsensusConfig& cfg, const crypto::KeyPair& key,
                               const crypto::KeyDirectory& dir, const NodeId& node, const sim::Network& net,
                               std::vector<Decision>& sink)
    : cfg_(cfg), key_(key), dir_(dir), net_(net), sink_(sink) {
  if (cfg.protocol == Protocol::PBFT)
    state_ = pbft_initial(node);
  else
    state_ = paxos_initial(node);
}

const DropCounters& ReplicaProcess::drops() const {
  return std::visit([](const auto& s) -> const DropCounters& { return s.drops; }, state_);
}

sim::StepOutput ReplicaProcess::step(const Event& ev) {
  const ReplicaContext ctx{cfg_, key_, dir_};
  StepResult result;
  if (auto* pbft = std::get_if<PbftState>(&state_)) {
    auto next = pbft_step(*pbft, ctx, ev);
    *pbft = std::move(next.state);
    result = std::move(next.result);
  } else {
    auto& paxos = std::get<PaxosState>(state_);
    auto next = paxos_step(paxos, ctx, ev);
    paxos = std::move(next.state);
    result = std::move(next.result);
  }

  sim::StepOutput out;
  out.messages = std::move(result.out);
  out.timers = std::move(result.timers);
  if (result.decision) {
    auto d = std::move(*result.decision);
    d.decided_at = net_.now();
    out.records.push_back("DECIDE " + d.node.str() + ' ' + d.instance_id + ' ' + std::to_string(d.slot) + ' ' +
                          sim::payload_digest(d.value));
    ++decisions_;
    sink_.push_back(std::move(d));
  }
  return out;
}

sim::StepOutput ReplicaProcess::on_message(const NodeId& from, const Bytes& payload, const std::string&) {
  if (from == sim::kClient) return step(ClientRequest{payload});
  return step(Incoming{from, payload});
}

sim::StepOutput ReplicaProcess::on_timer(std::uint64_t id) { return step(TimerFired{id}); }

InstanceOutcome run_instance(const InstanceSpec& spec, crypto::Keyring& keys) {
  const auto& cfg = spec.cfg;
  cfg.validate();
  InstanceOutcome outcome;
  for (const auto& m : cfg.members) keys.ensure(m);

  sim::Network net(spec.net, cfg.instance_id);
  std::vector<std::unique_ptr<ReplicaProcess>> procs;
  for (const auto& m : cfg.members) {
    procs.push_back(std::make_unique<ReplicaProcess>(cfg, keys.at(m), keys.directory(), m, net, outcome.decisions));
    net.add_node(m, *procs.back());
  }
  for (const auto& f : spec.faults) {
    net.inject_fault(f);
    if (!f.scope || *f.scope == cfg.instance_id) outcome.faulty.insert(f.node);
  }
  if (cfg.protocol == Protocol::PBFT) {
    net.set_equivocator([&keys, &outcome](const NodeId& sender, const sim::Outbound& msg) {
      return pbft_equivocate(msg, keys.at(sender), &outcome.proposals);
    });
  }

  outcome.proposals.values.insert(spec.request);
  const auto& targets = spec.request_targets.empty() ? cfg.members : spec.request_targets;
  for (const auto& t : targets) net.inject(spec.request_at, t, spec.request, "client-request");

  outcome.trace = net.run_until(spec.max_ticks);
  outcome.metrics = net.metrics();

  // Safety and termination over honest members.
  std::map<NodeId, std::vector<Bytes>> by_node;
  for (const auto& d : outcome.decisions) by_node[d.node].push_back(d.value);
  std::optional<Bytes> agreed;
  for (std::size_t i = 0; i < procs.size(); ++i) {
    const auto& node = cfg.members[i];
    const auto& d = procs[i]->drops();
    outcome.drops.bad_signature += d.bad_signature;
    outcome.drops.non_member += d.non_member;
    outcome.drops.wrong_view += d.wrong_view;
    outcome.drops.duplicate += d.duplicate;
    outcome.drops.malformed += d.malformed;
    if (auto* p = std::get_if<PbftState>(&procs[i]->state()); p && !outcome.faulty.contains(node))
      outcome.max_view = std::max(outcome.max_view, p->view);
    if (auto* p = std::get_if<PaxosState>(&procs[i]->state()))
      outcome.ballots = std::max(outcome.ballots, static_cast<std::uint32_t>(p->highest_round_seen));
    if (outcome.faulty.contains(node)) continue;

    auto it = by_node.find(node);
    if (it == by_node.end()) {
      outcome.undecided.push_back(node);
      continue;
    }
    if (it->second.size() > 1) outcome.safety_flags.push_back("integrity:" + node.str());
    for (const auto& v : it->second) {
      if (!outcome.proposals.values.contains(v)) outcome.safety_flags.push_back("validity:" + node.str());
      if (!agreed) agreed = v;
      else if (*agreed != v) outcome.safety_flags.push_back("agreement:" + node.str());
    }
  }
  outcome.stalled = !outcome.undecided.empty();
  if (outcome.faulty.size() > cfg.f_max) outcome.safety_flags.push_back("fault-bound-exceeded");
  return outcome;
}

}  // namespace otce::consensus
