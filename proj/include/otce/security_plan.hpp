#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "otce/bytes.hpp"
#include "otce/types.hpp"

namespace otce {

enum class Protocol : std::uint8_t { PBFT = 0, Paxos = 1 };

std::string to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view s);

/// Largest tolerated fault count under strict-minority floors:
/// PBFT floor((n-1)/3), Paxos floor((n-1)/2). Zero for n = 0.
std::uint32_t fault_bound(Protocol protocol, std::uint32_t n);

/// Consensus protocol plus its fault and quorum parameters for a group of n.
struct SecurityPlan {
  Protocol protocol = Protocol::PBFT;
  std::uint32_t n = 0;
  std::uint32_t f_max = 0;
  std::uint32_t quorum = 0;
  std::uint32_t verify_threshold = 0;

  /// Fills every parameter from protocol and n.
  static SecurityPlan for_group(Protocol protocol, std::uint32_t n);
  /// True iff all parameters match for_group(protocol, n).
  bool consistent() const;

  Bytes encode() const;
  static SecurityPlan decode(Decoder& dec);

  bool operator==(const SecurityPlan&) const = default;
};

std::ostream& operator<<(std::ostream& os, const SecurityPlan& p);

struct TrustVector {
  std::vector<double> components;

  /// Throws Error{"invalid-trust-vector"} when empty or out of [0, 1].
  void validate() const;
};

/// Linear trust-to-plan mapping: score = weights . tv, Paxos iff score >= tau.
struct PlanMapping {
  std::vector<std::vector<double>> weights{{1.0}};
  double tau = 0.8;

  /// Throws Error{"invalid-mapping"}.
  void validate() const;
  std::size_t dimension() const { return weights.empty() ? 0 : weights.front().size(); }
  double score(const TrustVector& tv) const;
};

/// Picks a protocol from a trust vector; lets callers swap in other mappings.
using ProtocolSelector = std::function<Protocol(const TrustVector&)>;

ProtocolSelector linear_selector(PlanMapping mapping);

/// Throws Error{"dimension-mismatch" | "invalid-trust-vector" | "group-too-small" |
/// "plan-infeasible"}. PBFT needs n >= 4; it is never downgraded.
SecurityPlan map_trust_to_plan(const PlanMapping& m, const TrustVector& tv, std::uint32_t n);
SecurityPlan map_trust_to_plan(const ProtocolSelector& select, const TrustVector& tv, std::uint32_t n);

}  // namespace otce
