#include "otce/simnet.hpp"

#include <algorithm>
#include <sstream>

#include "otce/crypto.hpp"

namespace otce::sim {

void NetworkConfig::validate() const {
  if (delay_min > delay_max) throw Error("invalid-network-config", "delay_min > delay_max");
  if (async_delay_max != 0 && async_delay_max < delay_min)
    throw Error("invalid-network-config", "async_delay_max < delay_min");
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw Error("invalid-network-config", "drop_rate out of [0,1]");
}

std::string to_string(Behavior b) {
  switch (b) {
    case Behavior::Crash: return "crash";
    case Behavior::DropAll: return "drop-all";
    case Behavior::Equivocate: return "equivocate";
    case Behavior::DelayMax: return "delay-max";
  }
  return "?";
}

std::optional<Behavior> parse_behavior(std::string_view s) {
  if (s == "crash") return Behavior::Crash;
  if (s == "drop-all") return Behavior::DropAll;
  if (s == "equivocate") return Behavior::Equivocate;
  if (s == "delay-max") return Behavior::DelayMax;
  return std::nullopt;
}

void StepOutput::append(StepOutput other) {
  for (auto& m : other.messages) messages.push_back(std::move(m));
  for (auto& t : other.timers) timers.push_back(t);
  for (auto& r : other.records) records.push_back(std::move(r));
}

std::string Trace::text() const {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

std::string payload_digest(ByteView payload) { return crypto::short_hex(crypto::sha256(payload)); }

namespace {
std::uint64_t mix_seed(std::uint64_t seed, const std::string& instance) {
  Encoder enc;
  enc.str("otce-simnet").u64(seed).str(instance);
  auto d = crypto::sha256(enc.data());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
  return v;
}
}  // namespace

Network::Network(NetworkConfig cfg, std::string instance_id)
    : cfg_(cfg), instance_(std::move(instance_id)), rng_(mix_seed(cfg.seed, instance_)) {
  cfg_.validate();
}

void Network::add_node(const NodeId& id, Process& process) {
  if (!nodes_.contains(id)) order_.push_back(id);
  nodes_[id] = &process;
}

bool Network::applies(const FaultSpec& spec) const { return !spec.scope || *spec.scope == instance_; }

void Network::inject_fault(const FaultSpec& spec) {
  if (!nodes_.contains(spec.node)) throw Error("unknown-node", spec.node.str());
  if (!applies(spec)) return;
  for (const auto& f : faults_)
    if (f.node == spec.node && f.scope == spec.scope) throw Error("conflicting-fault", spec.node.str());
  faults_.push_back(spec);
  ++metrics_.faults_injected;
}

std::optional<Behavior> Network::behavior_of(const NodeId& node, Tick at) const {
  for (const auto& f : faults_)
    if (f.node == node && at >= f.start) return f.behavior;
  return std::nullopt;
}

bool Network::crashed(const NodeId& node, Tick at) const { return behavior_of(node, at) == Behavior::Crash; }

Tick Network::draw_delay(const NodeId& from) {
  const bool synchronous = cfg_.gst && now_ >= *cfg_.gst;
  if (behavior_of(from, now_) == Behavior::DelayMax) {
    if (cfg_.gst) return std::max(now_ + cfg_.delay_max, *cfg_.gst + cfg_.delay_max) - now_;
    return cfg_.pre_gst_max();
  }
  const Tick hi = synchronous ? cfg_.delay_max : cfg_.pre_gst_max();
  Tick delay = cfg_.delay_min + rng_() % (hi - cfg_.delay_min + 1);
  if (cfg_.gst && !synchronous) {
    const Tick latest = *cfg_.gst + cfg_.delay_max;
    if (now_ + delay > latest) delay = std::max(latest - now_, cfg_.delay_min);
  }
  return delay;
}

void Network::schedule(SimEvent ev) {
  ev.seq = next_seq_++;
  queue_.push(std::move(ev));
}

std::optional<SimEvent> Network::send(const NodeId& from, const Outbound& msg) {
  if (!nodes_.contains(from)) throw Error("unknown-node", from.str());
  return send_one(from, msg, nullptr);
}

std::optional<SimEvent> Network::send_one(const NodeId& from, const Outbound& original, Trace* trace) {
  if (!nodes_.contains(original.to)) throw Error("unknown-node", original.to.str());
  ++metrics_.sent;

  auto log_drop = [&](const Outbound& m, const char* why) {
    std::ostringstream line;
    line << now_ << ' ' << next_seq_++ << ' ' << from << ' ' << m.to << " drop:" << m.kind << ' '
         << payload_digest(m.payload) << ' ' << why;
    (trace ? trace->lines : pending_lines_).push_back(line.str());
    ++metrics_.dropped;
    return std::nullopt;
  };

  const auto behavior = behavior_of(from, now_);
  if (behavior == Behavior::Crash) return log_drop(original, "crashed");
  if (behavior == Behavior::DropAll) return log_drop(original, "drop-all");

  Outbound msg = original;
  if (behavior == Behavior::Equivocate && equivocator_) {
    auto pos = std::find(order_.begin(), order_.end(), msg.to) - order_.begin();
    if (pos % 2 == 1) {
      if (auto alt = equivocator_(from, msg)) {
        msg = std::move(*alt);
        ++metrics_.equivocated;
      }
    }
  }

  const bool lossy = !(cfg_.gst && now_ >= *cfg_.gst);
  const bool drop = lossy && cfg_.drop_rate > 0.0 && static_cast<double>(rng_() >> 11) * 0x1.0p-53 < cfg_.drop_rate;
  if (drop) return log_drop(msg, "network");

  SimEvent ev;
  ev.deliver_at = now_ + draw_delay(from);
  ev.type = SimEvent::Type::Message;
  ev.from = from;
  ev.to = msg.to;
  ev.payload = std::move(msg.payload);
  ev.kind = std::move(msg.kind);
  ev.sent_at = now_;
  schedule(ev);
  ev.seq = next_seq_ - 1;
  return ev;
}

void Network::inject(Tick at, const NodeId& to, Bytes payload, std::string kind) {
  if (!nodes_.contains(to)) throw Error("unknown-node", to.str());
  SimEvent ev;
  ev.deliver_at = at;
  ev.from = kClient;
  ev.to = to;
  ev.payload = std::move(payload);
  ev.kind = std::move(kind);
  ev.sent_at = at;
  ++metrics_.sent;
  schedule(std::move(ev));
}

void Network::dispatch(const NodeId& node, StepOutput out, Trace& trace) {
  for (auto& r : out.records) trace.lines.push_back(std::to_string(now_) + ' ' + r);
  for (const auto& m : out.messages) send_one(node, m, &trace);
  for (const auto& t : out.timers) {
    SimEvent ev;
    ev.deliver_at = now_ + std::max<Tick>(t.delay, 1);
    ev.type = SimEvent::Type::Timer;
    ev.from = node;
    ev.to = node;
    ev.timer_id = t.id;
    ev.sent_at = now_;
    schedule(std::move(ev));
  }
}

Trace Network::run_until(Tick max_tick) {
  Trace trace;
  trace.lines = std::move(pending_lines_);
  pending_lines_.clear();

  while (!queue_.empty() && queue_.top().deliver_at <= max_tick) {
    SimEvent ev = queue_.top();
    queue_.pop();
    now_ = ev.deliver_at;
    const bool is_msg = ev.type == SimEvent::Type::Message;

    if (crashed(ev.to, now_)) {
      if (is_msg) {
        ++metrics_.dropped;
        trace.lines.push_back(std::to_string(now_) + ' ' + std::to_string(ev.seq) + ' ' + ev.from.str() + ' ' +
                              ev.to.str() + " drop:" + ev.kind + ' ' + payload_digest(ev.payload) + " receiver-crashed");
      }
      continue;
    }

    std::ostringstream line;
    if (is_msg) {
      ++metrics_.delivered;
      line << now_ << ' ' << ev.seq << ' ' << ev.from << ' ' << ev.to << ' ' << ev.kind << ' '
           << payload_digest(ev.payload);
    } else {
      ++metrics_.timers_fired;
      line << now_ << ' ' << ev.seq << ' ' << ev.to << ' ' << ev.to << " timer:" << ev.timer_id << " -";
    }
    trace.lines.push_back(line.str());

    auto& proc = *nodes_.at(ev.to);
    auto out = is_msg ? proc.on_message(ev.from, ev.payload, ev.kind) : proc.on_timer(ev.timer_id);
    dispatch(ev.to, std::move(out), trace);
  }

  metrics_.in_flight = 0;
  auto copy = queue_;
  while (!copy.empty()) {
    if (copy.top().type == SimEvent::Type::Message) ++metrics_.in_flight;
    copy.pop();
  }

  if (queue_.empty()) {
    trace.status = RunStatus::Quiescent;
    trace.end_tick = now_;
  } else {
    trace.status = RunStatus::BudgetExhausted;
    now_ = std::max(now_, max_tick);
    trace.end_tick = max_tick;
    trace.lines.push_back(std::to_string(max_tick) + " BUDGET-EXHAUSTED pending=" + std::to_string(queue_.size()));
  }
  return trace;
}

}  // namespace otce::sim
