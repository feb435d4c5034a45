#include "otce/did_registry.hpp"

#include <algorithm>
#include <cctype>
#include <ostream>
#include <sstream>

namespace otce::did {

using ledger::TxOutcome;

std::string did_for(const crypto::PublicKey& pubkey) {
  auto d = crypto::sha256(pubkey);
  return "did:otce:" + to_hex(ByteView(d.data(), 16));
}

std::optional<std::string> AttestationPolicy::check(const std::map<std::string, Bytes>& attestation) const {
  for (const auto& [name, rule] : required) {
    auto it = attestation.find(name);
    if (it == attestation.end()) return "missing-attribute:" + name;
    const auto& v = it->second;
    if (v.size() < rule.min_len || v.size() > rule.max_len) return "bad-length:" + name;
    auto all = [&](auto pred) { return std::all_of(v.begin(), v.end(), pred); };
    if (rule.encoding == Encoding::Hex && !all([](std::uint8_t c) { return std::isxdigit(c) != 0; }))
      return "bad-encoding:" + name;
    if (rule.encoding == Encoding::Ascii && !all([](std::uint8_t c) { return c >= 0x20 && c < 0x7f; }))
      return "bad-encoding:" + name;
  }
  return std::nullopt;
}

Bytes RegisterDID::encode() const {
  Encoder enc;
  enc.bytes(pubkey).u32(static_cast<std::uint32_t>(attestation.size()));
  for (const auto& [name, value] : attestation) enc.str(name).bytes(value);
  return std::move(enc).take();
}

RegisterDID RegisterDID::decode(ByteView payload) {
  Decoder dec(payload);
  RegisterDID r;
  auto key = dec.bytes();
  if (key.size() != r.pubkey.size()) throw DecodeError("public key must be 32 bytes");
  std::copy(key.begin(), key.end(), r.pubkey.begin());
  auto n = dec.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = dec.str();
    if (r.attestation.contains(name)) throw DecodeError("duplicate attribute");
    r.attestation[name] = dec.bytes();
  }
  dec.expect_done();
  return r;
}

DIDRegistry::DIDRegistry(AttestationPolicy policy) : policy_(std::move(policy)) {
  if (policy_.required.empty()) throw Error("invalid-policy", "required attribute set is empty");
}

std::optional<std::string> DIDRegistry::check_format(const ledger::Transaction& tx) const {
  try {
    RegisterDID::decode(tx.payload);
  } catch (const DecodeError& e) {
    return std::string(e.what());
  }
  return std::nullopt;
}

TxOutcome DIDRegistry::apply(const ledger::Transaction& tx, const ledger::BlockContext& ctx) {
  if (auto why = check_format(tx)) return TxOutcome::failed("malformed: " + *why);
  return apply_register_did(tx, RegisterDID::decode(tx.payload), ctx.height);
}

TxOutcome DIDRegistry::apply_register_did(const ledger::Transaction& tx, const RegisterDID& body, Height height) {
  if (auto why = policy_.check(body.attestation)) return TxOutcome::failed(*why);
  auto id = did_for(body.pubkey);
  if (records_.contains(id)) return TxOutcome::failed("duplicate-did");
  records_.emplace(id, DIDRecord{id, body.pubkey, body.attestation, height, tx.sender});
  return TxOutcome::ok();
}

const DIDRecord* DIDRegistry::find(const std::string& did) const {
  auto it = records_.find(did);
  return it == records_.end() ? nullptr : &it->second;
}

void DIDRegistry::dump(std::ostream& out) const {
  for (const auto& [id, rec] : records_) {
    out << id << ' ' << rec.owner << ' ' << rec.registered_at << ' ';
    bool first = true;
    for (const auto& [name, value] : rec.attestation) {
      out << (first ? "" : ",") << name << '=' << to_hex(value);
      first = false;
    }
    out << '\n';
  }
}

std::string DIDRegistry::state_dump() const {
  std::ostringstream out;
  dump(out);
  return out.str();
}

PrimeField::PrimeField(std::uint64_t modulus) : p_(modulus) {
  if (modulus < 2 || modulus > kDefaultModulus) throw Error("invalid-modulus", std::to_string(modulus));
}

std::uint64_t PrimeField::add(std::uint64_t a, std::uint64_t b) const { return (a + b) % p_; }

std::uint64_t PrimeField::sub(std::uint64_t a, std::uint64_t b) const { return (a + p_ - b % p_) % p_; }

__extension__ using Wide = unsigned __int128;

std::uint64_t PrimeField::mul(std::uint64_t a, std::uint64_t b) const {
  return static_cast<std::uint64_t>(static_cast<Wide>(a) * b % p_);
}

std::uint64_t PrimeField::pow(std::uint64_t a, std::uint64_t e) const {
  std::uint64_t result = 1 % p_;
  a %= p_;
  while (e > 0) {
    if (e & 1) result = mul(result, a);
    a = mul(a, a);
    e >>= 1;
  }
  return result;
}

std::uint64_t PrimeField::inv(std::uint64_t a) const {
  if (a % p_ == 0) throw Error("division-by-zero", "inverse of 0");
  return pow(a, p_ - 2);
}

std::vector<SecretShare> share_secret(std::uint64_t secret, std::uint32_t t, std::uint32_t n, std::mt19937_64& rng,
                                      const PrimeField& field, const std::string& group_id) {
  if (t == 0 || t > n) throw Error("invalid-threshold", "t=" + std::to_string(t) + " n=" + std::to_string(n));
  if (n >= field.modulus()) throw Error("invalid-threshold", "n must be below the field modulus");
  if (secret >= field.modulus()) throw Error("secret-out-of-field", std::to_string(secret));

  std::uniform_int_distribution<std::uint64_t> coeff(0, field.modulus() - 1);
  std::vector<std::uint64_t> poly{secret};
  for (std::uint32_t i = 1; i < t; ++i) poly.push_back(coeff(rng));

  std::vector<SecretShare> shares;
  shares.reserve(n);
  for (std::uint32_t x = 1; x <= n; ++x) {
    // Horner evaluation.
    std::uint64_t y = 0;
    for (auto c = poly.rbegin(); c != poly.rend(); ++c) y = field.add(field.mul(y, x), *c);
    shares.push_back({x, y, group_id});
  }
  return shares;
}

std::uint64_t reconstruct(const std::vector<SecretShare>& shares, std::uint32_t t, const PrimeField& field) {
  if (t == 0 || shares.size() < t)
    throw Error("insufficient-shares", std::to_string(shares.size()) + " < " + std::to_string(t));
  std::vector<SecretShare> used(shares.begin(), shares.begin() + t);
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i].index == 0 || used[i].index >= field.modulus()) throw Error("invalid-index", std::to_string(used[i].index));
    if (used[i].group_id != used[0].group_id) throw Error("mixed-sharings", used[i].group_id);
    for (std::size_t j = 0; j < i; ++j)
      if (used[i].index == used[j].index) throw Error("duplicate-index", std::to_string(used[i].index));
  }

  std::uint64_t secret = 0;
  for (std::size_t i = 0; i < used.size(); ++i) {
    std::uint64_t num = 1, den = 1;
    for (std::size_t j = 0; j < used.size(); ++j) {
      if (i == j) continue;
      num = field.mul(num, used[j].index);
      den = field.mul(den, field.sub(used[j].index, used[i].index));
    }
    auto basis = field.mul(num, field.inv(den));
    secret = field.add(secret, field.mul(used[i].value % field.modulus(), basis));
  }
  return secret;
}

Bytes commit_secret(std::uint64_t secret) {
  Encoder enc;
  enc.str("otce-secret").u64(secret);
  return crypto::digest_bytes(enc.data());
}

}  // namespace otce::did
