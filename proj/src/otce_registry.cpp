#include "otce/otce_registry.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace otce::registry {

using ledger::TxKind;
using ledger::TxOutcome;

std::string to_string(OTCEState s) {
  switch (s) {
    case OTCEState::New: return "New";
    case OTCEState::Running: return "Running";
    case OTCEState::Suspend: return "Suspend";
    case OTCEState::Terminated: return "Terminated";
  }
  return "?";
}

bool is_legal_transition(OTCEState from, OTCEState to) {
  using S = OTCEState;
  return (from == S::New && to == S::Running) || (from == S::Running && to == S::Suspend) ||
         (from == S::Suspend && to == S::Running) || (from == S::Running && to == S::Terminated) ||
         (from == S::Suspend && to == S::Terminated);
}

std::string to_string(TerminationCause c) {
  switch (c) {
    case TerminationCause::None: return "none";
    case TerminationCause::Results: return "results";
    case TerminationCause::Expired: return "expired";
    case TerminationCause::Closed: return "closed";
  }
  return "?";
}

Bytes ResultSubmission::result_digest() const {
  Encoder enc;
  enc.str("otce-results").str(eid).u32(static_cast<std::uint32_t>(digests.size()));
  for (const auto& [node, d] : digests) enc.str(node.str()).bytes(d);
  return crypto::digest_bytes(enc.data());
}

Bytes ResultSubmission::signing_message() const {
  Encoder enc;
  enc.str("otce-result-sig").str(eid).bytes(result_digest());
  return std::move(enc).take();
}

void add_quorum_signature(ResultSubmission& sub, const NodeId& signer, const crypto::KeyPair& key) {
  sub.quorum_sigs.push_back({signer, key.sign(sub.signing_message())});
}

bool OTCERecord::in_group(const NodeId& n) const { return std::binary_search(group.begin(), group.end(), n); }

namespace {
std::vector<std::string> names(const std::vector<NodeId>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(id.str());
  return out;
}

std::vector<NodeId> ids(const std::vector<std::string>& names) {
  return {names.begin(), names.end()};
}

std::string join(const std::vector<NodeId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i].str();
  return out;
}
}  // namespace

Bytes CreateOTCE::encode() const {
  Encoder enc;
  enc.str(label).strs(names(group)).u64(delta_t).bytes(plan.encode());
  return std::move(enc).take();
}

CreateOTCE CreateOTCE::decode(ByteView payload) {
  Decoder dec(payload);
  CreateOTCE c;
  c.label = dec.str();
  c.group = ids(dec.strs());
  c.delta_t = dec.u64();
  auto plan_bytes = dec.bytes();
  Decoder pd(plan_bytes);
  c.plan = SecurityPlan::decode(pd);
  pd.expect_done();
  dec.expect_done();
  return c;
}

Bytes SuspendOTCE::encode() const {
  Encoder enc;
  enc.str(eid).bytes(context).u64(nonce);
  return std::move(enc).take();
}

SuspendOTCE SuspendOTCE::decode(ByteView payload) {
  Decoder dec(payload);
  SuspendOTCE s;
  s.eid = dec.str();
  s.context = dec.bytes();
  s.nonce = dec.u64();
  dec.expect_done();
  return s;
}

Bytes ResumeOTCE::encode() const {
  Encoder enc;
  enc.str(eid).u64(nonce);
  return std::move(enc).take();
}

ResumeOTCE ResumeOTCE::decode(ByteView payload) {
  Decoder dec(payload);
  ResumeOTCE r;
  r.eid = dec.str();
  r.nonce = dec.u64();
  dec.expect_done();
  return r;
}

Bytes SubmitResult::encode() const {
  const auto& s = submission;
  Encoder enc;
  enc.str(s.eid).u32(static_cast<std::uint32_t>(s.digests.size()));
  for (const auto& [node, d] : s.digests) enc.str(node.str()).bytes(d);
  enc.u32(static_cast<std::uint32_t>(s.quorum_sigs.size()));
  for (const auto& q : s.quorum_sigs) enc.str(q.signer.str()).bytes(q.signature);
  return std::move(enc).take();
}

SubmitResult SubmitResult::decode(ByteView payload) {
  Decoder dec(payload);
  SubmitResult r;
  auto& s = r.submission;
  s.eid = dec.str();
  auto nd = dec.u32();
  for (std::uint32_t i = 0; i < nd; ++i) {
    NodeId node(dec.str());
    s.digests[node] = dec.bytes();
  }
  auto ns = dec.u32();
  for (std::uint32_t i = 0; i < ns; ++i) {
    NodeId signer(dec.str());
    s.quorum_sigs.push_back({signer, dec.bytes()});
  }
  dec.expect_done();
  return r;
}

Bytes TerminateOTCE::encode() const {
  Encoder enc;
  enc.str(eid).str(cause).u64(at);
  return std::move(enc).take();
}

TerminateOTCE TerminateOTCE::decode(ByteView payload) {
  Decoder dec(payload);
  TerminateOTCE t;
  t.eid = dec.str();
  t.cause = dec.str();
  t.at = dec.u64();
  dec.expect_done();
  return t;
}

Bytes UpdatePlan::encode() const {
  Encoder enc;
  enc.str(eid).u32(static_cast<std::uint32_t>(new_tv.components.size()));
  for (double c : new_tv.components) enc.f64(c);
  enc.u64(nonce);
  return std::move(enc).take();
}

UpdatePlan UpdatePlan::decode(ByteView payload) {
  Decoder dec(payload);
  UpdatePlan u;
  u.eid = dec.str();
  auto n = dec.u32();
  if (n > payload.size() / 8) throw DecodeError("trust vector length exceeds payload");
  for (std::uint32_t i = 0; i < n; ++i) u.new_tv.components.push_back(dec.f64());
  u.nonce = dec.u64();
  dec.expect_done();
  return u;
}

OTCERegistry::OTCERegistry(const crypto::KeyDirectory& keys, PlanMapping mapping)
    : keys_(&keys), mapping_(std::move(mapping)) {
  mapping_.validate();
}

bool OTCERegistry::handles(TxKind kind) const {
  switch (kind) {
    case TxKind::CreateOTCE:
    case TxKind::SuspendOTCE:
    case TxKind::ResumeOTCE:
    case TxKind::SubmitResult:
    case TxKind::TerminateOTCE:
    case TxKind::UpdatePlan: return true;
    default: return false;
  }
}

std::optional<std::string> OTCERegistry::check_format(const ledger::Transaction& tx) const {
  try {
    switch (tx.kind) {
      case TxKind::CreateOTCE: CreateOTCE::decode(tx.payload); break;
      case TxKind::SuspendOTCE: SuspendOTCE::decode(tx.payload); break;
      case TxKind::ResumeOTCE: ResumeOTCE::decode(tx.payload); break;
      case TxKind::SubmitResult: SubmitResult::decode(tx.payload); break;
      case TxKind::TerminateOTCE:
        if (TerminateOTCE::decode(tx.payload).cause != "closed") return "members may only close";
        break;
      case TxKind::UpdatePlan: UpdatePlan::decode(tx.payload); break;
      default: return "not an OTCE transaction";
    }
  } catch (const DecodeError& e) {
    return std::string(e.what());
  }
  return std::nullopt;
}

TxOutcome OTCERegistry::apply(const ledger::Transaction& tx, const ledger::BlockContext& ctx) {
  if (auto why = check_format(tx)) return TxOutcome::failed("malformed: " + *why);
  switch (tx.kind) {
    case TxKind::CreateOTCE: return apply_create(tx, CreateOTCE::decode(tx.payload), ctx.height);
    case TxKind::SuspendOTCE: return apply_suspend(tx, SuspendOTCE::decode(tx.payload), ctx.height);
    case TxKind::ResumeOTCE: return apply_resume(tx, ResumeOTCE::decode(tx.payload), ctx.height);
    case TxKind::SubmitResult: return apply_submit_result(tx, SubmitResult::decode(tx.payload), ctx.height);
    case TxKind::TerminateOTCE: return apply_terminate(tx, TerminateOTCE::decode(tx.payload), ctx.height);
    case TxKind::UpdatePlan: return apply_update_plan(tx, UpdatePlan::decode(tx.payload), ctx.height);
    default: return TxOutcome::failed("not an OTCE transaction");
  }
}

void OTCERegistry::transition(OTCERecord& rec, OTCEState to, Height height) {
  transitions_.push_back({rec.eid, rec.state, to, height});
  rec.state = to;
}

TxOutcome OTCERegistry::apply_create(const ledger::Transaction& tx, const CreateOTCE& body, Height height) {
  auto group = body.group;
  std::sort(group.begin(), group.end());
  if (group.empty()) return TxOutcome::failed("empty-group");
  if (std::adjacent_find(group.begin(), group.end()) != group.end()) return TxOutcome::failed("duplicate-member");
  if (body.delta_t == 0) return TxOutcome::failed("zero-delta-t");
  if (!std::binary_search(group.begin(), group.end(), tx.sender)) return TxOutcome::failed("sender-not-in-group");
  if (body.plan.n != group.size() || !body.plan.consistent()) return TxOutcome::failed("plan-group-mismatch");
  if (body.plan.protocol == Protocol::PBFT && body.plan.n < 4) return TxOutcome::failed("plan-infeasible");

  std::ostringstream eid;
  eid << 'E' << std::setw(6) << std::setfill('0') << next_eid_++;
  OTCERecord rec;
  rec.eid = eid.str();
  rec.group = std::move(group);
  rec.delta_t = body.delta_t;
  rec.created_height = height;
  rec.plan = body.plan;
  rec.label = body.label;
  transition(rec, OTCEState::Running, height);
  plan_history_[rec.eid].emplace_back(height, rec.plan);
  by_tx_[tx.tx_id] = rec.eid;
  records_.emplace(rec.eid, std::move(rec));
  return TxOutcome::ok();
}

namespace {
/// Common checks for member-issued transactions on an existing record.
std::optional<std::string> member_check(const OTCERecord* rec, const NodeId& sender, Height height) {
  if (rec == nullptr) return "unknown-eid";
  if (rec->state == OTCEState::Terminated) return "terminated";
  if (height >= rec->expiry_height()) return "expired";
  if (!rec->in_group(sender)) return "sender-not-in-group";
  return std::nullopt;
}
}  // namespace

TxOutcome OTCERegistry::apply_suspend(const ledger::Transaction& tx, const SuspendOTCE& body, Height height) {
  auto it = records_.find(body.eid);
  auto* rec = it == records_.end() ? nullptr : &it->second;
  if (auto why = member_check(rec, tx.sender, height)) return TxOutcome::failed(*why);
  if (rec->state != OTCEState::Running) return TxOutcome::failed("not-running");
  rec->context = body.context;
  transition(*rec, OTCEState::Suspend, height);
  return TxOutcome::ok();
}

TxOutcome OTCERegistry::apply_resume(const ledger::Transaction& tx, const ResumeOTCE& body, Height height) {
  auto it = records_.find(body.eid);
  auto* rec = it == records_.end() ? nullptr : &it->second;
  if (auto why = member_check(rec, tx.sender, height)) return TxOutcome::failed(*why);
  if (rec->state != OTCEState::Suspend) return TxOutcome::failed("not-suspended");
  transition(*rec, OTCEState::Running, height);
  return TxOutcome::ok();
}

TxOutcome OTCERegistry::apply_submit_result(const ledger::Transaction& tx, const SubmitResult& body,
                                            Height height) {
  const auto& sub = body.submission;
  auto it = records_.find(sub.eid);
  auto* rec = it == records_.end() ? nullptr : &it->second;
  if (auto why = member_check(rec, tx.sender, height)) return TxOutcome::failed(*why);
  if (rec->state != OTCEState::Running) return TxOutcome::failed("not-running");
  for (const auto& [node, d] : sub.digests)
    if (!rec->in_group(node)) return TxOutcome::failed("digest-from-non-member");

  const auto message = sub.signing_message();
  std::set<NodeId> valid;
  for (const auto& q : sub.quorum_sigs) {
    if (!rec->in_group(q.signer)) return TxOutcome::failed("signer-not-in-group");
    if (keys_->verify(q.signer, message, q.signature)) valid.insert(q.signer);
  }
  if (valid.size() < rec->plan.verify_threshold) return TxOutcome::failed("insufficient-quorum");

  rec->results = sub;
  rec->result_height = height;
  rec->cause = TerminationCause::Results;
  rec->terminated_height = height;
  transition(*rec, OTCEState::Terminated, height);
  return TxOutcome::ok();
}

TxOutcome OTCERegistry::apply_terminate(const ledger::Transaction& tx, const TerminateOTCE& body, Height height) {
  auto it = records_.find(body.eid);
  auto* rec = it == records_.end() ? nullptr : &it->second;
  if (auto why = member_check(rec, tx.sender, height)) return TxOutcome::failed(*why);
  rec->cause = TerminationCause::Closed;
  rec->terminated_height = height;
  transition(*rec, OTCEState::Terminated, height);
  return TxOutcome::ok();
}

TxOutcome OTCERegistry::apply_update_plan(const ledger::Transaction& tx, const UpdatePlan& body, Height height) {
  auto it = records_.find(body.eid);
  auto* rec = it == records_.end() ? nullptr : &it->second;
  if (auto why = member_check(rec, tx.sender, height)) return TxOutcome::failed(*why);
  try {
    auto plan = map_trust_to_plan(mapping_, body.new_tv, static_cast<std::uint32_t>(rec->group.size()));
    if (plan != rec->plan) {
      rec->plan = plan;
      plan_history_[rec->eid].emplace_back(height, plan);
    }
  } catch (const Error& e) {
    return TxOutcome::failed(e.code());
  }
  return TxOutcome::ok();
}

std::vector<Eid> OTCERegistry::expiry_sweep(Height height) {
  std::vector<Eid> expired;
  for (auto& [eid, rec] : records_) {
    if (rec.alive() && height >= rec.expiry_height()) {
      rec.cause = TerminationCause::Expired;
      rec.terminated_height = height;
      transition(rec, OTCEState::Terminated, height);
      expired.push_back(eid);
    }
  }
  return expired;
}

std::vector<std::pair<TxKind, Bytes>> OTCERegistry::end_of_block(const ledger::BlockContext& ctx) {
  std::vector<std::pair<TxKind, Bytes>> markers;
  for (const auto& eid : expiry_sweep(ctx.height))
    markers.emplace_back(TxKind::TerminateOTCE, TerminateOTCE{eid, "expired", ctx.height}.encode());
  return markers;
}

const OTCERecord* OTCERegistry::find(const Eid& eid) const {
  auto it = records_.find(eid);
  return it == records_.end() ? nullptr : &it->second;
}

std::optional<Eid> OTCERegistry::eid_for_tx(const Bytes& tx_id) const {
  auto it = by_tx_.find(tx_id);
  if (it == by_tx_.end()) return std::nullopt;
  return it->second;
}

void OTCERegistry::query_dump(std::ostream& out) const {
  for (const auto& [eid, rec] : records_)
    out << eid << ' ' << to_string(rec.state) << ' ' << join(rec.group) << ' ' << rec.delta_t << ' '
        << rec.created_height << '\n';
}

std::string OTCERegistry::state_dump() const {
  std::ostringstream out;
  for (const auto& [eid, rec] : records_) {
    out << eid << ' ' << to_string(rec.state) << ' ' << join(rec.group) << ' ' << rec.delta_t << ' '
        << rec.created_height << " label=" << rec.label << " plan=" << rec.plan
        << " cause=" << to_string(rec.cause) << " terminated="
        << (rec.terminated_height ? std::to_string(*rec.terminated_height) : "-")
        << " context=" << to_hex(rec.context)
        << " results=" << (rec.results ? to_hex(rec.results->result_digest()) : "-") << '\n';
  }
  for (const auto& [eid, hist] : plan_history_) {
    out << "plans " << eid;
    for (const auto& [h, p] : hist) out << ' ' << h << ':' << p;
    out << '\n';
  }
  return out.str();
}

}  // namespace otce::registry
