#include "otce/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace otce::crypto {

namespace {
void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialization failed");
}
}  // namespace

Digest sha256(ByteView data) {
  Digest out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Bytes digest_bytes(ByteView data) {
  auto d = sha256(data);
  return Bytes(d.begin(), d.end());
}

std::string short_hex(const Digest& d) { return to_hex(ByteView(d.data(), 8)); }

KeyPair KeyPair::from_seed(ByteView seed) {
  ensure_sodium();
  if (seed.size() != crypto_sign_SEEDBYTES) throw std::invalid_argument("key seed must be 32 bytes");
  KeyPair kp;
  crypto_sign_seed_keypair(kp.public_.data(), kp.secret_.data(), seed.data());
  return kp;
}

KeyPair KeyPair::derive(std::string_view label, std::uint64_t scenario_seed) {
  Encoder enc;
  enc.str("otce-key").str(label).u64(scenario_seed);
  auto seed = sha256(enc.data());
  return from_seed(seed);
}

Bytes KeyPair::sign(ByteView message) const {
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
  return sig;
}

bool verify(const PublicKey& key, ByteView message, ByteView signature) {
  ensure_sodium();
  if (signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), key.data()) == 0;
}

std::optional<PublicKey> KeyDirectory::find(const NodeId& node) const {
  auto it = keys_.find(node);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

bool KeyDirectory::verify(const NodeId& node, ByteView message, ByteView signature) const {
  auto it = keys_.find(node);
  return it != keys_.end() && crypto::verify(it->second, message, signature);
}

const KeyPair& Keyring::ensure(const NodeId& node) {
  auto it = pairs_.find(node);
  if (it == pairs_.end()) {
    it = pairs_.emplace(node, KeyPair::derive(node.str(), seed_)).first;
    directory_.add(node, it->second.public_key());
  }
  return it->second;
}

const KeyPair& Keyring::at(const NodeId& node) const {
  auto it = pairs_.find(node);
  if (it == pairs_.end()) throw std::out_of_range("no key for node " + node.str());
  return it->second;
}

}  // namespace otce::crypto
