#include "otce/paxos.hpp"

#include <algorithm>

namespace otce::consensus {

using namespace paxos;

PaxosState paxos_initial(const NodeId& node) {
  PaxosState s;
  s.node = node;
  return s;
}

namespace {

const char* kind_name(std::uint8_t type) {
  switch (type) {
    case kPrepare: return "paxos-prepare";
    case kPromise: return "paxos-promise";
    case kAccept: return "paxos-accept";
    case kAccepted: return "paxos-accepted";
    case kNack: return "paxos-nack";
    case kDecided: return "paxos-decided";
  }
  return "paxos-unknown";
}

class Node {
public:
  Node(const PaxosState& s, const ReplicaContext& ctx) : s_(s), ctx_(ctx), cfg_(ctx.cfg) {}

  PaxosStep finish() { return {std::move(s_), std::move(r_)}; }

  void on_request(const Bytes& value) {
    if (decided() || s_.request) return;
    s_.request = value;
    const Tick delay = rank() * cfg_.proposer_stagger.value_or(cfg_.view_timeout);
    if (delay == 0) {
      start_ballot();
    } else {
      ++s_.timer_epoch;
      r_.timers.push_back({delay, s_.timer_epoch});
    }
  }

  void on_timer(std::uint64_t id) {
    if (decided() || id != s_.timer_epoch) return;
    start_ballot();
  }

  void on_message(const NodeId& from, const Bytes& wire) {
    SignedMessage m;
    try {
      m = SignedMessage::decode(wire);
    } catch (const DecodeError&) {
      ++s_.drops.malformed;
      return;
    }
    if (m.instance != cfg_.instance_id || !cfg_.is_member(m.sender) || m.sender != from) {
      ++s_.drops.non_member;
      return;
    }
    if (!m.verify(ctx_.directory)) {
      ++s_.drops.bad_signature;
      return;
    }
    const Ballot b{m.view, m.ballot_node};
    s_.highest_round_seen = std::max(s_.highest_round_seen, b.round);

    if (decided()) {
      if (m.type == kPrepare || m.type == kAccept) send_decided(from);
      return;
    }
    switch (m.type) {
      case kPrepare: return on_prepare(from, b);
      case kPromise: return on_promise(from, b, Ballot{m.aux, m.aux_node}, m.value);
      case kAccept: return on_accept(from, b, m.value);
      case kAccepted: return on_accepted(from, b, m.value);
      case kNack: return on_nack(b);
      case kDecided: return decide(m.value);
      default: ++s_.drops.malformed;
    }
  }

private:
  bool decided() const { return s_.log.contains(0); }
  std::uint64_t rank() const { return *cfg_.index_of(s_.node); }

  SignedMessage make(std::uint8_t type, const Ballot& b) const {
    SignedMessage m;
    m.type = type;
    m.instance = cfg_.instance_id;
    m.view = b.round;
    m.ballot_node = b.node;
    m.sender = s_.node;
    return m;
  }

  void send(const NodeId& to, SignedMessage m) {
    m.sign(ctx_.key);
    r_.out.push_back({to, m.encode(), kind_name(m.type)});
  }

  void broadcast(SignedMessage m) {
    m.sign(ctx_.key);
    auto wire = m.encode();
    for (const auto& peer : cfg_.members)
      if (peer != s_.node) r_.out.push_back({peer, wire, kind_name(m.type)});
  }

  void start_ballot() {
    ++s_.attempts;
    const auto round = std::max({s_.highest_round_seen, s_.ballot.round, s_.promised.round}) + 1;
    s_.ballot = Ballot{round, s_.node};
    s_.highest_round_seen = round;
    s_.phase = Phase::Preparing;
    s_.promises.clear();
    broadcast(make(kPrepare, s_.ballot));
    // Retry deadline grows with attempts and differs per member so that
    // duelling proposers drift apart.
    ++s_.timer_epoch;
    r_.timers.push_back({cfg_.view_timeout * (1 + s_.attempts) + rank() * (cfg_.view_timeout / 2 + 1), s_.timer_epoch});
    if (s_.ballot > s_.promised) {
      s_.promised = s_.ballot;
      on_promise(s_.node, s_.ballot, s_.accepted_ballot, s_.accepted_value);
    }
  }

  void on_prepare(const NodeId& from, const Ballot& b) {
    if (b > s_.promised) {
      s_.promised = b;
      auto m = make(kPromise, b);
      m.aux = s_.accepted_ballot.round;
      m.aux_node = s_.accepted_ballot.node;
      m.value = s_.accepted_value;
      send(from, std::move(m));
    } else {
      ++s_.drops.wrong_view;
      send(from, make(kNack, s_.promised));
    }
  }

  void on_promise(const NodeId& from, const Ballot& b, const Ballot& acc, const Bytes& value) {
    if (s_.phase != Phase::Preparing || b != s_.ballot) {
      ++s_.drops.wrong_view;
      return;
    }
    if (!s_.promises.emplace(from, std::make_pair(acc, value)).second) {
      ++s_.drops.duplicate;
      return;
    }
    if (s_.promises.size() < cfg_.quorum) return;

    const std::pair<Ballot, Bytes>* best = nullptr;
    for (const auto& [who, p] : s_.promises)
      if (!p.first.is_zero() && (!best || p.first > best->first)) best = &p;
    const Bytes value_to_propose = best ? best->second : *s_.request;

    s_.phase = Phase::Accepting;
    auto m = make(kAccept, s_.ballot);
    m.value = value_to_propose;
    broadcast(std::move(m));
    on_accept(s_.node, s_.ballot, value_to_propose);
  }

  void on_accept(const NodeId& from, const Ballot& b, const Bytes& value) {
    if (b < s_.promised) {
      ++s_.drops.wrong_view;
      if (from != s_.node) send(from, make(kNack, s_.promised));
      return;
    }
    s_.promised = b;
    s_.accepted_ballot = b;
    s_.accepted_value = value;
    auto m = make(kAccepted, b);
    m.value = value;
    broadcast(std::move(m));
    on_accepted(s_.node, b, value);
  }

  void on_accepted(const NodeId& from, const Ballot& b, const Bytes& value) {
    auto& votes = s_.accepted_votes[b];
    if (!votes.emplace(from, value).second) {
      ++s_.drops.duplicate;
      return;
    }
    if (votes.size() >= cfg_.quorum) decide(value);
  }

  void on_nack(const Ballot& promised) {
    if (promised > s_.ballot && s_.phase != Phase::Done) s_.phase = Phase::Idle;
  }

  void decide(const Bytes& value) {
    if (decided()) return;
    s_.log[0] = value;
    s_.phase = Phase::Done;
    r_.decision = Decision{cfg_.instance_id, 0, value, 0, s_.node};
  }

  void send_decided(const NodeId& to) {
    auto m = make(kDecided, s_.ballot);
    m.value = s_.log.at(0);
    send(to, std::move(m));
  }

  PaxosState s_;
  const ReplicaContext& ctx_;
  const ConsensusConfig& cfg_;
  StepResult r_;
};

}  // namespace

PaxosStep paxos_step(const PaxosState& state, const ReplicaContext& ctx, const Event& event) {
  Node node(state, ctx);
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, ClientRequest>) node.on_request(ev.value);
        else if constexpr (std::is_same_v<T, Incoming>) node.on_message(ev.from, ev.wire);
        else node.on_timer(ev.id);
      },
      event);
  return node.finish();
}

}  // namespace otce::consensus
