#include "otce/pbft.hpp"

#include <algorithm>

namespace otce::consensus {

using namespace pbft;

std::string pbft::to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::PrePrepared: return "pre-prepared";
    case Phase::Prepared: return "prepared";
    case Phase::Committed: return "committed";
    case Phase::ViewChanging: return "view-changing";
  }
  return "?";
}

PbftState pbft_initial(const NodeId& node) {
  PbftState s;
  s.node = node;
  return s;
}

const NodeId& pbft_leader(const ConsensusConfig& cfg, std::uint64_t view) { return cfg.members[view % cfg.n]; }

namespace {

const char* kind_name(std::uint8_t type) {
  switch (type) {
    case kPrePrepare: return "pbft-pre-prepare";
    case kPrepare: return "pbft-prepare";
    case kCommit: return "pbft-commit";
    case kViewChange: return "pbft-view-change";
    case kNewView: return "pbft-new-view";
    case kDecided: return "pbft-decided";
  }
  return "pbft-unknown";
}

/// Mutable working copy for one step.
class Replica {
public:
  Replica(const PbftState& s, const ReplicaContext& ctx) : s_(s), ctx_(ctx), cfg_(ctx.cfg) {}

  PbftStep finish() { return {std::move(s_), std::move(r_)}; }

  void on_request(const Bytes& value) {
    if (decided() || s_.request) return;
    s_.request = value;
    if (s_.view == 0 && s_.phase == Phase::Idle && is_leader(0)) {
      auto m = make(kPrePrepare, 0);
      m.value = value;
      m.digest = value_digest(value);
      m.sign(ctx_.key);
      auto wire = m.encode();
      accept(0, value, wire);
      broadcast(wire, kPrePrepare);
    }
    arm_timer();
  }

  void on_timer(std::uint64_t id) {
    if (decided() || id != s_.timer_epoch) return;
    ++s_.failed_views;
    start_view_change(std::max(s_.view, s_.pending_view) + 1);
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
    if (decided()) {
      if (m.type == kViewChange) send_decided(from);
      return;
    }
    switch (m.type) {
      case kPrePrepare: return on_pre_prepare(m, wire);
      case kPrepare:
      case kCommit: return on_vote(m, wire);
      case kViewChange: return on_view_change(m, wire);
      case kNewView: return on_new_view(m, wire);
      case kDecided: return on_decided(m);
      default: ++s_.drops.malformed;
    }
  }

private:
  bool decided() const { return s_.log.contains(0); }
  bool is_leader(std::uint64_t view) const { return pbft_leader(cfg_, view) == s_.node; }
  std::uint32_t f() const { return cfg_.f_max; }

  SignedMessage make(std::uint8_t type, std::uint64_t view) const {
    SignedMessage m;
    m.type = type;
    m.instance = cfg_.instance_id;
    m.view = view;
    m.sender = s_.node;
    return m;
  }

  void broadcast(const Bytes& wire, std::uint8_t type) {
    for (const auto& peer : cfg_.members)
      if (peer != s_.node) r_.out.push_back({peer, wire, kind_name(type)});
  }

  void arm_timer() {
    ++s_.timer_epoch;
    r_.timers.push_back({cfg_.view_timeout * (1 + s_.failed_views), s_.timer_epoch});
  }

  void accept(std::uint64_t view, const Bytes& value, const Bytes& wire) {
    s_.accepted_value = value;
    s_.accepted_wire = wire;
    s_.phase = Phase::PrePrepared;
    s_.commit_sent = false;
    (void)view;
  }

  /// Adds a vote; false if this signer already voted for the key.
  bool tally(std::uint8_t type, std::uint64_t view, const Bytes& digest, const NodeId& who, const Bytes& wire) {
    auto& bucket = s_.tallies[{type, view, digest}];
    return bucket.emplace(who, wire).second;
  }

  void vote(std::uint8_t type) {
    auto m = make(type, s_.view);
    m.digest = value_digest(*s_.accepted_value);
    m.sign(ctx_.key);
    auto wire = m.encode();
    tally(type, s_.view, m.digest, s_.node, wire);
    broadcast(wire, type);
  }

  void on_pre_prepare(const SignedMessage& m, const Bytes& wire) {
    if (m.view != s_.view || m.view != 0 || s_.phase != Phase::Idle || m.sender != pbft_leader(cfg_, m.view)) {
      ++s_.drops.wrong_view;
      return;
    }
    if (m.digest != value_digest(m.value) || m.value.empty()) {
      ++s_.drops.malformed;
      return;
    }
    accept(m.view, m.value, wire);
    vote(kPrepare);
    if (!s_.request) arm_timer();
    progress();
  }

  void on_vote(const SignedMessage& m, const Bytes& wire) {
    if (m.view < s_.view) {
      ++s_.drops.wrong_view;
      return;
    }
    if (!tally(m.type, m.view, m.digest, m.sender, wire)) {
      ++s_.drops.duplicate;
      return;
    }
    progress();
  }

  void progress() {
    if (s_.phase == Phase::ViewChanging || !s_.accepted_value) return;
    const auto digest = value_digest(*s_.accepted_value);
    const auto& leader = pbft_leader(cfg_, s_.view);

    if (s_.phase == Phase::PrePrepared) {
      auto it = s_.tallies.find({kPrepare, s_.view, digest});
      if (it == s_.tallies.end()) return;
      std::vector<Bytes> prepares;
      for (const auto& [who, w] : it->second)
        if (who != leader) prepares.push_back(w);
      if (prepares.size() < 2 * f()) return;
      prepares.resize(2 * f());
      s_.prepared = PreparedCert{s_.view, *s_.accepted_value, s_.accepted_wire, std::move(prepares)};
      s_.phase = Phase::Prepared;
      if (!s_.commit_sent) {
        s_.commit_sent = true;
        vote(kCommit);
      }
    }

    if (s_.phase == Phase::Prepared) {
      auto it = s_.tallies.find({kCommit, s_.view, digest});
      if (it == s_.tallies.end() || it->second.size() < 2 * f() + 1) return;
      s_.commit_cert.clear();
      for (const auto& [who, w] : it->second) {
        s_.commit_cert.push_back(w);
        if (s_.commit_cert.size() == 2 * f() + 1) break;
      }
      decide(*s_.accepted_value);
    }
  }

  void decide(const Bytes& value) {
    s_.phase = Phase::Committed;
    s_.log[0] = value;
    r_.decision = Decision{cfg_.instance_id, 0, value, 0, s_.node};
  }

  void send_decided(const NodeId& to) {
    auto m = make(kDecided, 0);
    m.value = s_.log.at(0);
    m.digest = value_digest(m.value);
    m.proofs = s_.commit_cert;
    m.sign(ctx_.key);
    r_.out.push_back({to, m.encode(), kind_name(kDecided)});
  }

  /// Decodes and verifies an embedded message of an expected type.
  std::optional<SignedMessage> embedded(const Bytes& wire, std::uint8_t type) const {
    try {
      auto m = SignedMessage::decode(wire);
      if (m.type != type || m.instance != cfg_.instance_id || !cfg_.is_member(m.sender)) return std::nullopt;
      if (!m.verify(ctx_.directory)) return std::nullopt;
      return m;
    } catch (const DecodeError&) {
      return std::nullopt;
    }
  }

  void on_decided(const SignedMessage& m) {
    const auto digest = value_digest(m.value);
    if (m.digest != digest) {
      ++s_.drops.malformed;
      return;
    }
    std::set<NodeId> signers;
    std::optional<std::uint64_t> view;
    for (const auto& w : m.proofs) {
      auto c = embedded(w, kCommit);
      if (!c || c->digest != digest || (view && *view != c->view)) continue;
      view = c->view;
      signers.insert(c->sender);
    }
    if (signers.size() < 2 * f() + 1) {
      ++s_.drops.malformed;
      return;
    }
    s_.commit_cert = m.proofs;
    decide(m.value);
  }

  /// Validates a prepared certificate carried in a view-change.
  std::optional<PreparedCert> check_cert(const std::vector<Bytes>& proofs, std::uint64_t below_view) const {
    if (proofs.empty()) return std::nullopt;
    std::optional<SignedMessage> pp = embedded(proofs[0], kPrePrepare);
    if (!pp) pp = embedded(proofs[0], kNewView);
    if (!pp || pp->view >= below_view || pp->sender != pbft_leader(cfg_, pp->view)) return std::nullopt;
    if (pp->digest != value_digest(pp->value)) return std::nullopt;
    std::set<NodeId> signers;
    for (std::size_t i = 1; i < proofs.size(); ++i) {
      auto p = embedded(proofs[i], kPrepare);
      if (p && p->view == pp->view && p->digest == pp->digest && p->sender != pp->sender) signers.insert(p->sender);
    }
    if (signers.size() < 2 * f()) return std::nullopt;
    return PreparedCert{pp->view, pp->value, proofs[0], {proofs.begin() + 1, proofs.end()}};
  }

  void start_view_change(std::uint64_t target) {
    s_.pending_view = target;
    s_.phase = Phase::ViewChanging;
    auto m = make(kViewChange, target);
    if (s_.prepared) {
      m.proofs.push_back(s_.prepared->pre_prepare);
      for (const auto& p : s_.prepared->prepares) m.proofs.push_back(p);
    }
    m.sign(ctx_.key);
    auto wire = m.encode();
    s_.view_changes[target][s_.node] = wire;
    broadcast(wire, kViewChange);
    arm_timer();
    maybe_new_view(target);
  }

  void on_view_change(const SignedMessage& m, const Bytes& wire) {
    if (m.view <= s_.view) {
      if (m.view == s_.view && is_leader(s_.view) && !s_.last_new_view.empty())
        r_.out.push_back({m.sender, s_.last_new_view, kind_name(kNewView)});
      else
        ++s_.drops.wrong_view;
      return;
    }
    if (!m.proofs.empty() && !check_cert(m.proofs, m.view)) {
      ++s_.drops.malformed;
      return;
    }
    if (!s_.view_changes[m.view].emplace(m.sender, wire).second) {
      ++s_.drops.duplicate;
      return;
    }

    // Join once f+1 replicas want to leave our view: move to the smallest
    // view among those requested above our own target.
    const auto floor = std::max(s_.view, s_.pending_view);
    std::set<NodeId> ahead;
    std::optional<std::uint64_t> smallest;
    for (const auto& [v, senders] : s_.view_changes) {
      if (v <= floor) continue;
      for (const auto& [who, w] : senders) ahead.insert(who);
      if (!smallest) smallest = v;
    }
    if (ahead.size() >= f() + 1 && smallest) {
      start_view_change(*smallest);
      return;
    }
    maybe_new_view(m.view);
  }

  /// Value a new view must carry given its view-change set: the value of the
  /// highest-view prepared certificate (smallest bytes on ties), if any.
  std::optional<Bytes> locked_value(const std::map<NodeId, Bytes>& vcs, std::uint64_t target) const {
    std::optional<PreparedCert> best;
    for (const auto& [who, w] : vcs) {
      auto vc = SignedMessage::decode(w);
      auto cert = check_cert(vc.proofs, target);
      if (!cert) continue;
      if (!best || cert->view > best->view || (cert->view == best->view && cert->value < best->value))
        best = std::move(cert);
    }
    if (!best) return std::nullopt;
    return best->value;
  }

  void maybe_new_view(std::uint64_t target) {
    if (!is_leader(target) || target <= s_.view || s_.new_views_sent.contains(target)) return;
    auto it = s_.view_changes.find(target);
    if (it == s_.view_changes.end() || it->second.size() < 2 * f() + 1) return;

    auto value = locked_value(it->second, target);
    if (!value) value = s_.request;
    if (!value) return;

    auto m = make(kNewView, target);
    m.value = *value;
    m.digest = value_digest(*value);
    for (const auto& [who, w] : it->second) m.proofs.push_back(w);
    m.sign(ctx_.key);
    auto wire = m.encode();
    s_.new_views_sent.insert(target);
    s_.last_new_view = wire;
    broadcast(wire, kNewView);
    install(target, *value, wire);
  }

  void on_new_view(const SignedMessage& m, const Bytes& wire) {
    if (m.view <= s_.view || m.sender != pbft_leader(cfg_, m.view)) {
      ++s_.drops.wrong_view;
      return;
    }
    if (m.value.empty() || m.digest != value_digest(m.value)) {
      ++s_.drops.malformed;
      return;
    }
    std::map<NodeId, Bytes> vcs;
    for (const auto& w : m.proofs) {
      auto vc = embedded(w, kViewChange);
      if (!vc || vc->view != m.view) continue;
      if (!vc->proofs.empty() && !check_cert(vc->proofs, m.view)) continue;
      vcs.emplace(vc->sender, w);
    }
    if (vcs.size() < 2 * f() + 1) {
      ++s_.drops.malformed;
      return;
    }
    if (auto locked = locked_value(vcs, m.view); locked && *locked != m.value) {
      ++s_.drops.malformed;
      return;
    }
    install(m.view, m.value, wire);
    vote(kPrepare);
    progress();
  }

  void install(std::uint64_t view, const Bytes& value, const Bytes& wire) {
    s_.view = view;
    s_.pending_view = std::max(s_.pending_view, view);
    accept(view, value, wire);
    arm_timer();
    if (is_leader(view)) progress();
  }

  PbftState s_;
  const ReplicaContext& ctx_;
  const ConsensusConfig& cfg_;
  StepResult r_;
};

}  // namespace

PbftStep pbft_step(const PbftState& state, const ReplicaContext& ctx, const Event& event) {
  Replica replica(state, ctx);
  std::visit(
      [&](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, ClientRequest>) replica.on_request(ev.value);
        else if constexpr (std::is_same_v<T, Incoming>) replica.on_message(ev.from, ev.wire);
        else replica.on_timer(ev.id);
      },
      event);
  return replica.finish();
}

std::optional<sim::Outbound> pbft_equivocate(const sim::Outbound& msg, const crypto::KeyPair& sender_key,
                                             ProposalLog* log) {
  SignedMessage m;
  try {
    m = SignedMessage::decode(msg.payload);
  } catch (const DecodeError&) {
    return std::nullopt;
  }
  switch (m.type) {
    case kPrePrepare:
    case kNewView:
      m.value = equivocal_value(m.value);
      m.digest = value_digest(m.value);
      if (log) log->values.insert(m.value);
      break;
    case kPrepare:
    case kCommit: {
      Bytes seed = to_bytes("equivocal-digest");
      seed.insert(seed.end(), m.digest.begin(), m.digest.end());
      m.digest = crypto::digest_bytes(seed);
      break;
    }
    case kViewChange:
      if (m.proofs.empty()) return std::nullopt;
      m.proofs.clear();
      break;
    default: return std::nullopt;
  }
  m.sign(sender_key);
  return sim::Outbound{msg.to, m.encode(), msg.kind};
}

}  // namespace otce::consensus
