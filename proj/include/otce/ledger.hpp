#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "otce/crypto.hpp"
#include "otce/types.hpp"

namespace otce::ledger {

enum class TxKind : std::uint8_t {
  CreateOTCE = 0,
  SuspendOTCE = 1,
  ResumeOTCE = 2,
  SubmitResult = 3,
  TerminateOTCE = 4,
  RegisterDID = 5,
  UpdatePlan = 6,
};

std::string to_string(TxKind kind);

/// Sender id reserved for transactions the contracts emit themselves
/// (e.g. expiry markers). User transactions may not use it.
inline const NodeId kSystemSender{"@ledger"};

struct Transaction {
  Bytes tx_id;
  TxKind kind = TxKind::CreateOTCE;
  Bytes payload;
  NodeId sender;
  Bytes signature;

  static Bytes compute_id(TxKind kind, ByteView payload, const NodeId& sender);
  static Transaction make(TxKind kind, Bytes payload, const NodeId& sender, const crypto::KeyPair& key);

  bool id_matches() const { return tx_id == compute_id(kind, payload, sender); }
  bool operator==(const Transaction&) const = default;
};

enum class TxStatus : std::uint8_t { Ok = 0, Failed = 1 };

/// A committed transaction with the outcome of its contract execution.
struct TxRecord {
  Transaction tx;
  TxStatus status = TxStatus::Ok;
  std::string reason;

  Bytes digest() const;
  bool operator==(const TxRecord&) const = default;
};

struct Block {
  Height height = 0;
  Bytes prev_hash;
  std::vector<TxRecord> txs;
  Bytes hash;

  Bytes compute_hash() const;
  bool operator==(const Block&) const = default;
};

using Chain = std::vector<Block>;

/// Height of the first block that fails verification, if any. Checks the
/// height sequence, prev-hash links, every tx id and every block hash.
std::optional<Height> verify_chain(const Chain& chain);

/// Signature check of every transaction against registered keys.
std::optional<Height> verify_signatures(const Chain& chain, const crypto::KeyDirectory& keys);

struct BlockContext {
  Height height = 0;
};

struct TxOutcome {
  TxStatus status = TxStatus::Ok;
  std::string reason;

  static TxOutcome ok() { return {}; }
  static TxOutcome failed(std::string why) { return {TxStatus::Failed, std::move(why)}; }
};

/// A registered contract. apply() runs during sealing; a failed outcome is
/// recorded on-chain and must leave contract state untouched.
class ContractHook {
public:
  virtual ~ContractHook() = default;

  virtual bool handles(TxKind kind) const = 0;
  /// Reason string if the payload cannot be decoded.
  virtual std::optional<std::string> check_format(const Transaction& tx) const = 0;
  virtual TxOutcome apply(const Transaction& tx, const BlockContext& ctx) = 0;
  /// Marker payloads for transactions the contract triggers at end of block.
  virtual std::vector<std::pair<TxKind, Bytes>> end_of_block(const BlockContext&) { return {}; }
  /// Canonical textual state, used for replay-equivalence checks.
  virtual std::string state_dump() const = 0;
};

enum class SubmitStatus { Accepted, BadTxId, BadSignature, UnknownSender, ReservedSender, Duplicate, Malformed, Unhandled };

std::string to_string(SubmitStatus s);

struct SubmitResult {
  SubmitStatus status = SubmitStatus::Accepted;
  std::string reason;

  bool accepted() const { return status == SubmitStatus::Accepted; }
};

/// Hash-chained log with a single deterministic sealer. Block height is the
/// global clock. Single writer; the committed chain may be read concurrently.
class Ledger {
public:
  explicit Ledger(std::uint64_t seed = 0);

  void register_key(const NodeId& node, const crypto::PublicKey& key);
  const crypto::KeyDirectory& keys() const { return keys_; }

  /// Hooks run in registration order. The ledger does not own them.
  void add_contract(ContractHook& hook) { hooks_.push_back(&hook); }

  SubmitResult submit_tx(const Transaction& tx);
  const Block& seal_block();

  Height current_height() const { return chain_.back().height; }
  const Chain& chain() const { return chain_; }
  const std::vector<Transaction>& mempool() const { return mempool_; }

  /// Re-executes every committed transaction against fresh hooks and reports
  /// the first height whose recorded outcomes or markers differ.
  static std::optional<Height> replay(const Chain& chain, const std::vector<ContractHook*>& fresh_hooks);

private:
  ContractHook* hook_for(TxKind kind) const;

  crypto::KeyPair sealer_;
  crypto::KeyDirectory keys_;
  std::vector<ContractHook*> hooks_;
  Chain chain_;
  std::vector<Transaction> mempool_;
  std::set<Bytes> seen_ids_;
};

/// One line per block: `<height> <prev_hex> <hash_hex> <txs>` where txs is `-`
/// or comma-separated `kind:sender_hex:payload_hex:sig_hex:txid_hex:status:reason_hex`.
void dump_chain(const Chain& chain, std::ostream& out);
/// Throws Error{"parse-error"} with the offending line number.
Chain load_chain(std::istream& in);

}  // namespace otce::ledger
