#pragma once

#include <iosfwd>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "otce/ledger.hpp"

namespace otce::did {

struct DIDRecord {
  std::string did;
  crypto::PublicKey pubkey{};
  std::map<std::string, Bytes> attestation;
  Height registered_at = 0;
  NodeId owner;
};

/// Self-certifying identifier: "did:otce:" + first 16 bytes of SHA-256(pubkey), hex.
std::string did_for(const crypto::PublicKey& pubkey);

enum class Encoding { Any, Hex, Ascii };

struct FormatRule {
  std::size_t min_len = 1;
  std::size_t max_len = 256;
  Encoding encoding = Encoding::Any;
};

struct AttestationPolicy {
  std::map<std::string, FormatRule> required;

  /// First violation, or nullopt if the attestation satisfies the policy.
  std::optional<std::string> check(const std::map<std::string, Bytes>& attestation) const;
};

struct RegisterDID {
  crypto::PublicKey pubkey{};
  std::map<std::string, Bytes> attestation;

  Bytes encode() const;
  static RegisterDID decode(ByteView payload);
};

/// Attestation contract: checks formats and policy, one DID per public key.
class DIDRegistry : public ledger::ContractHook {
public:
  /// Throws Error{"invalid-policy"} if the required set is empty.
  explicit DIDRegistry(AttestationPolicy policy);

  bool handles(ledger::TxKind kind) const override { return kind == ledger::TxKind::RegisterDID; }
  std::optional<std::string> check_format(const ledger::Transaction& tx) const override;
  ledger::TxOutcome apply(const ledger::Transaction& tx, const ledger::BlockContext& ctx) override;
  std::string state_dump() const override;

  ledger::TxOutcome apply_register_did(const ledger::Transaction& tx, const RegisterDID& body, Height height);

  const DIDRecord* find(const std::string& did) const;
  const std::map<std::string, DIDRecord>& records() const { return records_; }
  const AttestationPolicy& policy() const { return policy_; }

  /// `did owner registered_at attr=hex,...` lines.
  void dump(std::ostream& out) const;

private:
  AttestationPolicy policy_;
  std::map<std::string, DIDRecord> records_;
};

// Threshold secret sharing over a prime field (dealer-based stand-in for
// asynchronous distributed key generation).

class PrimeField {
public:
  /// 2^61 - 1.
  static constexpr std::uint64_t kDefaultModulus = (std::uint64_t{1} << 61) - 1;

  explicit PrimeField(std::uint64_t modulus = kDefaultModulus);

  std::uint64_t modulus() const { return p_; }
  std::uint64_t add(std::uint64_t a, std::uint64_t b) const;
  std::uint64_t sub(std::uint64_t a, std::uint64_t b) const;
  std::uint64_t mul(std::uint64_t a, std::uint64_t b) const;
  std::uint64_t pow(std::uint64_t a, std::uint64_t e) const;
  /// Throws Error{"division-by-zero"} for a == 0.
  std::uint64_t inv(std::uint64_t a) const;

private:
  std::uint64_t p_;
};

struct SecretShare {
  std::uint32_t index = 0;
  std::uint64_t value = 0;
  std::string group_id;

  bool operator==(const SecretShare&) const = default;
};

/// Shamir sharing with a random degree-(t-1) polynomial, p(0) = secret.
/// Throws Error{"invalid-threshold" | "secret-out-of-field"}.
std::vector<SecretShare> share_secret(std::uint64_t secret, std::uint32_t t, std::uint32_t n, std::mt19937_64& rng,
                                      const PrimeField& field = PrimeField{}, const std::string& group_id = "");

/// Lagrange interpolation at zero over the first t shares.
/// Throws Error{"insufficient-shares" | "duplicate-index" | "mixed-sharings"}.
std::uint64_t reconstruct(const std::vector<SecretShare>& shares, std::uint32_t t,
                          const PrimeField& field = PrimeField{});

/// Public commitment to a shared secret: SHA-256 of its encoding.
Bytes commit_secret(std::uint64_t secret);

}  // namespace otce::did
