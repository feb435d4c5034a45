#include "otce/ledger.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace otce::ledger {

namespace {
constexpr std::size_t kHashSize = 32;

Bytes zero_hash() { return Bytes(kHashSize, 0); }
}  // namespace

std::string to_string(TxKind kind) {
  switch (kind) {
    case TxKind::CreateOTCE: return "CreateOTCE";
    case TxKind::SuspendOTCE: return "SuspendOTCE";
    case TxKind::ResumeOTCE: return "ResumeOTCE";
    case TxKind::SubmitResult: return "SubmitResult";
    case TxKind::TerminateOTCE: return "TerminateOTCE";
    case TxKind::RegisterDID: return "RegisterDID";
    case TxKind::UpdatePlan: return "UpdatePlan";
  }
  return "Unknown";
}

std::string to_string(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Accepted: return "accepted";
    case SubmitStatus::BadTxId: return "bad-tx-id";
    case SubmitStatus::BadSignature: return "bad-signature";
    case SubmitStatus::UnknownSender: return "unknown-sender";
    case SubmitStatus::ReservedSender: return "reserved-sender";
    case SubmitStatus::Duplicate: return "duplicate";
    case SubmitStatus::Malformed: return "malformed";
    case SubmitStatus::Unhandled: return "unhandled-kind";
  }
  return "unknown";
}

Bytes Transaction::compute_id(TxKind kind, ByteView payload, const NodeId& sender) {
  Encoder enc;
  enc.u8(static_cast<std::uint8_t>(kind)).bytes(payload).str(sender.str());
  return crypto::digest_bytes(enc.data());
}

Transaction Transaction::make(TxKind kind, Bytes payload, const NodeId& sender, const crypto::KeyPair& key) {
  Transaction tx;
  tx.kind = kind;
  tx.tx_id = compute_id(kind, payload, sender);
  tx.payload = std::move(payload);
  tx.sender = sender;
  tx.signature = key.sign(tx.tx_id);
  return tx;
}

Bytes TxRecord::digest() const {
  Encoder enc;
  enc.bytes(tx.tx_id)
      .u8(static_cast<std::uint8_t>(tx.kind))
      .bytes(tx.payload)
      .str(tx.sender.str())
      .bytes(tx.signature)
      .u8(static_cast<std::uint8_t>(status))
      .str(reason);
  return crypto::digest_bytes(enc.data());
}

Bytes Block::compute_hash() const {
  Encoder enc;
  enc.u64(height).bytes(prev_hash).u32(static_cast<std::uint32_t>(txs.size()));
  for (const auto& rec : txs) enc.bytes(rec.digest());
  return crypto::digest_bytes(enc.data());
}

std::optional<Height> verify_chain(const Chain& chain) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& b = chain[i];
    const auto expected_prev = i == 0 ? zero_hash() : chain[i - 1].hash;
    bool ok = b.height == i && b.prev_hash == expected_prev;
    for (const auto& rec : b.txs) ok = ok && rec.tx.id_matches();
    if (!ok || b.hash != b.compute_hash()) return i;
  }
  return std::nullopt;
}

std::optional<Height> verify_signatures(const Chain& chain, const crypto::KeyDirectory& keys) {
  for (const auto& b : chain)
    for (const auto& rec : b.txs)
      if (!keys.verify(rec.tx.sender, rec.tx.tx_id, rec.tx.signature)) return b.height;
  return std::nullopt;
}

Ledger::Ledger(std::uint64_t seed) : sealer_(crypto::KeyPair::derive(kSystemSender.str(), seed)) {
  keys_.add(kSystemSender, sealer_.public_key());
  Block genesis;
  genesis.height = 0;
  genesis.prev_hash = zero_hash();
  genesis.hash = genesis.compute_hash();
  chain_.push_back(std::move(genesis));
}

void Ledger::register_key(const NodeId& node, const crypto::PublicKey& key) {
  if (node == kSystemSender) throw Error("reserved-sender", node.str());
  keys_.add(node, key);
}

ContractHook* Ledger::hook_for(TxKind kind) const {
  for (auto* h : hooks_)
    if (h->handles(kind)) return h;
  return nullptr;
}

SubmitResult Ledger::submit_tx(const Transaction& tx) {
  if (tx.sender == kSystemSender) return {SubmitStatus::ReservedSender, "system sender"};
  if (!tx.id_matches()) return {SubmitStatus::BadTxId, "tx_id does not match content"};
  if (seen_ids_.contains(tx.tx_id)) return {SubmitStatus::Duplicate, to_hex(tx.tx_id)};
  if (!keys_.contains(tx.sender)) return {SubmitStatus::UnknownSender, tx.sender.str()};
  if (!keys_.verify(tx.sender, tx.tx_id, tx.signature)) return {SubmitStatus::BadSignature, tx.sender.str()};
  auto* hook = hook_for(tx.kind);
  if (hook == nullptr) return {SubmitStatus::Unhandled, to_string(tx.kind)};
  if (auto why = hook->check_format(tx)) return {SubmitStatus::Malformed, *why};
  seen_ids_.insert(tx.tx_id);
  mempool_.push_back(tx);
  return {};
}

const Block& Ledger::seal_block() {
  Block b;
  b.height = current_height() + 1;
  b.prev_hash = chain_.back().hash;
  const BlockContext ctx{b.height};

  for (auto& tx : mempool_) {
    auto* hook = hook_for(tx.kind);
    auto outcome = hook ? hook->apply(tx, ctx) : TxOutcome::failed("no contract");
    b.txs.push_back(TxRecord{std::move(tx), outcome.status, std::move(outcome.reason)});
  }
  mempool_.clear();

  for (auto* hook : hooks_) {
    for (auto& [kind, payload] : hook->end_of_block(ctx)) {
      auto marker = Transaction::make(kind, std::move(payload), kSystemSender, sealer_);
      seen_ids_.insert(marker.tx_id);
      b.txs.push_back(TxRecord{std::move(marker), TxStatus::Ok, {}});
    }
  }

  b.hash = b.compute_hash();
  chain_.push_back(std::move(b));
  return chain_.back();
}

std::optional<Height> Ledger::replay(const Chain& chain, const std::vector<ContractHook*>& fresh_hooks) {
  auto hook_for = [&](TxKind kind) -> ContractHook* {
    for (auto* h : fresh_hooks)
      if (h->handles(kind)) return h;
    return nullptr;
  };
  for (const auto& b : chain) {
    if (b.height == 0) continue;
    const BlockContext ctx{b.height};
    std::vector<std::pair<TxKind, Bytes>> recorded_markers;
    for (const auto& rec : b.txs) {
      if (rec.tx.sender == kSystemSender) {
        recorded_markers.emplace_back(rec.tx.kind, rec.tx.payload);
        continue;
      }
      auto* hook = hook_for(rec.tx.kind);
      auto outcome = hook ? hook->apply(rec.tx, ctx) : TxOutcome::failed("no contract");
      if (outcome.status != rec.status || outcome.reason != rec.reason) return b.height;
    }
    std::vector<std::pair<TxKind, Bytes>> produced;
    for (auto* hook : fresh_hooks)
      for (auto& m : hook->end_of_block(ctx)) produced.push_back(std::move(m));
    if (produced != recorded_markers) return b.height;
  }
  return std::nullopt;
}

void dump_chain(const Chain& chain, std::ostream& out) {
  for (const auto& b : chain) {
    out << b.height << ' ' << to_hex(b.prev_hash) << ' ' << to_hex(b.hash) << ' ';
    if (b.txs.empty()) out << '-';
    for (std::size_t i = 0; i < b.txs.size(); ++i) {
      const auto& r = b.txs[i];
      out << (i ? "," : "") << static_cast<int>(r.tx.kind) << ':' << to_hex(to_bytes(r.tx.sender.str())) << ':'
          << to_hex(r.tx.payload) << ':' << to_hex(r.tx.signature) << ':' << to_hex(r.tx.tx_id) << ':'
          << static_cast<int>(r.status) << ':' << to_hex(to_bytes(r.reason));
    }
    out << '\n';
  }
}

namespace {
std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}
}  // namespace

Chain load_chain(std::istream& in) {
  Chain chain;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fail = [&](const std::string& what) {
      return Error("parse-error", what + " (line " + std::to_string(lineno) + ")");
    };
    std::istringstream ls(line);
    Block b;
    std::string prev, hash, txs;
    if (!(ls >> b.height >> prev >> hash >> txs)) throw fail("expected 4 fields");
    try {
      b.prev_hash = from_hex(prev);
      b.hash = from_hex(hash);
      if (txs != "-") {
        for (const auto& item : split(txs, ',')) {
          auto f = split(item, ':');
          if (f.size() != 7) throw fail("transaction needs 7 fields");
          TxRecord r;
          int kind = std::stoi(f[0]);
          int status = std::stoi(f[5]);
          if (kind < 0 || kind > 6 || status < 0 || status > 1) throw fail("enum out of range");
          r.tx.kind = static_cast<TxKind>(kind);
          r.tx.sender = NodeId(otce::to_string(from_hex(f[1])));
          r.tx.payload = from_hex(f[2]);
          r.tx.signature = from_hex(f[3]);
          r.tx.tx_id = from_hex(f[4]);
          r.status = static_cast<TxStatus>(status);
          r.reason = otce::to_string(from_hex(f[6]));
          b.txs.push_back(std::move(r));
        }
      }
    } catch (const std::logic_error& e) {
      throw fail(e.what());
    }
    chain.push_back(std::move(b));
  }
  return chain;
}

}  // namespace otce::ledger
