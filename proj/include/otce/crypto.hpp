#pragma once

#include <array>
#include <map>
#include <optional>

#include "otce/bytes.hpp"
#include "otce/types.hpp"

namespace otce::crypto {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256; the one digest used project-wide.
Digest sha256(ByteView data);
Bytes digest_bytes(ByteView data);
std::string short_hex(const Digest& d);

using PublicKey = std::array<std::uint8_t, 32>;

/// Ed25519 signing identity. Keys are derived from a 32-byte seed so that
/// scenario runs are reproducible.
class KeyPair {
public:
  static KeyPair from_seed(ByteView seed);
  /// Seed = SHA-256(label || u64 scenario seed).
  static KeyPair derive(std::string_view label, std::uint64_t scenario_seed);

  const PublicKey& public_key() const { return public_; }
  Bytes sign(ByteView message) const;

private:
  PublicKey public_{};
  std::array<std::uint8_t, 64> secret_{};
};

bool verify(const PublicKey& key, ByteView message, ByteView signature);

/// Registered public keys, the simulation's PKI.
class KeyDirectory {
public:
  void add(const NodeId& node, const PublicKey& key) { keys_[node] = key; }
  std::optional<PublicKey> find(const NodeId& node) const;
  bool contains(const NodeId& node) const { return keys_.contains(node); }
  bool verify(const NodeId& node, ByteView message, ByteView signature) const;

private:
  std::map<NodeId, PublicKey> keys_;
};

/// Holds secret keys for every simulated participant and exposes their
/// public halves through a KeyDirectory.
class Keyring {
public:
  explicit Keyring(std::uint64_t seed) : seed_(seed) {}

  const KeyPair& ensure(const NodeId& node);
  const KeyPair& at(const NodeId& node) const;
  const KeyDirectory& directory() const { return directory_; }

private:
  std::uint64_t seed_;
  std::map<NodeId, KeyPair> pairs_;
  KeyDirectory directory_;
};

}  // namespace otce::crypto
