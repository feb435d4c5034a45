#include "otce/consensus.hpp"

#include <algorithm>

namespace otce::consensus {

ConsensusConfig ConsensusConfig::from_plan(const SecurityPlan& plan, std::vector<NodeId> members,
                                           std::string instance_id, Tick view_timeout) {
  std::sort(members.begin(), members.end());
  ConsensusConfig cfg;
  cfg.protocol = plan.protocol;
  cfg.n = plan.n;
  cfg.f_max = plan.f_max;
  cfg.quorum = plan.quorum;
  cfg.view_timeout = view_timeout;
  cfg.instance_id = std::move(instance_id);
  cfg.members = std::move(members);
  cfg.validate();
  return cfg;
}

void ConsensusConfig::validate() const {
  if (n == 0 || members.size() != n) throw Error("invalid-consensus-config", "member count must equal n");
  if (!std::is_sorted(members.begin(), members.end()) ||
      std::adjacent_find(members.begin(), members.end()) != members.end())
    throw Error("invalid-consensus-config", "members must be sorted and unique");
  if (view_timeout == 0) throw Error("invalid-consensus-config", "view_timeout must be positive");
  const auto plan = SecurityPlan::for_group(protocol, n);
  if (f_max != plan.f_max || quorum != plan.quorum)
    throw Error("invalid-consensus-config", "fault/quorum parameters inconsistent with n");
}

std::optional<std::size_t> ConsensusConfig::index_of(const NodeId& node) const {
  auto it = std::lower_bound(members.begin(), members.end(), node);
  if (it == members.end() || *it != node) return std::nullopt;
  return static_cast<std::size_t>(it - members.begin());
}

Bytes SignedMessage::body() const {
  Encoder enc;
  enc.u8(type).str(instance).u64(view).str(sender.str()).str(ballot_node.str()).u64(aux).str(aux_node.str());
  enc.bytes(value).bytes(digest).u32(static_cast<std::uint32_t>(proofs.size()));
  for (const auto& p : proofs) enc.bytes(p);
  return std::move(enc).take();
}

Bytes SignedMessage::encode() const {
  Encoder enc;
  enc.bytes(body()).bytes(signature);
  return std::move(enc).take();
}

SignedMessage SignedMessage::decode(ByteView wire) {
  Decoder outer(wire);
  auto body = outer.bytes();
  auto sig = outer.bytes();
  outer.expect_done();

  Decoder dec(body);
  SignedMessage m;
  m.type = dec.u8();
  m.instance = dec.str();
  m.view = dec.u64();
  m.sender = NodeId(dec.str());
  m.ballot_node = NodeId(dec.str());
  m.aux = dec.u64();
  m.aux_node = NodeId(dec.str());
  m.value = dec.bytes();
  m.digest = dec.bytes();
  auto n = dec.u32();
  if (n > body.size() / 4) throw DecodeError("proof count exceeds body");
  for (std::uint32_t i = 0; i < n; ++i) m.proofs.push_back(dec.bytes());
  dec.expect_done();
  m.signature = std::move(sig);
  return m;
}

void SignedMessage::sign(const crypto::KeyPair& key) { signature = key.sign(body()); }

bool SignedMessage::verify(const crypto::KeyDirectory& dir) const { return dir.verify(sender, body(), signature); }

Bytes value_digest(ByteView value) { return crypto::digest_bytes(value); }

Bytes equivocal_value(ByteView value) {
  Bytes alt(value.begin(), value.end());
  const auto suffix = to_bytes("~equivocal");
  alt.insert(alt.end(), suffix.begin(), suffix.end());
  return alt;
}

}  // namespace otce::consensus
