#include "otce/security_plan.hpp"

#include <cmath>
#include <ostream>

namespace otce {

std::string to_string(Protocol p) { return p == Protocol::PBFT ? "PBFT" : "Paxos"; }

std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "PBFT" || s == "pbft") return Protocol::PBFT;
  if (s == "Paxos" || s == "paxos") return Protocol::Paxos;
  return std::nullopt;
}

std::uint32_t fault_bound(Protocol protocol, std::uint32_t n) {
  if (n == 0) return 0;
  return protocol == Protocol::PBFT ? (n - 1) / 3 : (n - 1) / 2;
}

SecurityPlan SecurityPlan::for_group(Protocol protocol, std::uint32_t n) {
  SecurityPlan p;
  p.protocol = protocol;
  p.n = n;
  p.f_max = fault_bound(protocol, n);
  p.quorum = protocol == Protocol::PBFT ? n - p.f_max : n / 2 + 1;
  p.verify_threshold = n - p.f_max;
  return p;
}

bool SecurityPlan::consistent() const { return n > 0 && *this == for_group(protocol, n); }

Bytes SecurityPlan::encode() const {
  Encoder enc;
  enc.u8(static_cast<std::uint8_t>(protocol)).u32(n).u32(f_max).u32(quorum).u32(verify_threshold);
  return std::move(enc).take();
}

SecurityPlan SecurityPlan::decode(Decoder& dec) {
  SecurityPlan p;
  auto proto = dec.u8();
  if (proto > 1) throw DecodeError("unknown protocol tag");
  p.protocol = static_cast<Protocol>(proto);
  p.n = dec.u32();
  p.f_max = dec.u32();
  p.quorum = dec.u32();
  p.verify_threshold = dec.u32();
  return p;
}

std::ostream& operator<<(std::ostream& os, const SecurityPlan& p) {
  return os << to_string(p.protocol) << "(n=" << p.n << ",f=" << p.f_max << ",q=" << p.quorum
            << ",v=" << p.verify_threshold << ")";
}

void TrustVector::validate() const {
  if (components.empty()) throw Error("invalid-trust-vector", "empty");
  for (double c : components)
    if (!(c >= 0.0 && c <= 1.0)) throw Error("invalid-trust-vector", "component out of [0,1]");
}

void PlanMapping::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error("invalid-mapping", "tau out of [0,1]");
  // One row: the threshold rule scores a single scalar.
  if (weights.size() != 1 || weights.front().empty())
    throw Error("invalid-mapping", "weights must be a single non-empty row");
  for (double w : weights.front())
    if (!std::isfinite(w)) throw Error("invalid-mapping", "non-finite weight");
}

double PlanMapping::score(const TrustVector& tv) const {
  validate();
  if (tv.components.size() != dimension())
    throw Error("dimension-mismatch", std::to_string(tv.components.size()) + " vs " + std::to_string(dimension()));
  double s = 0.0;
  for (std::size_t i = 0; i < tv.components.size(); ++i) s += weights.front()[i] * tv.components[i];
  return s;
}

ProtocolSelector linear_selector(PlanMapping mapping) {
  mapping.validate();
  return [m = std::move(mapping)](const TrustVector& tv) {
    return m.score(tv) >= m.tau ? Protocol::Paxos : Protocol::PBFT;
  };
}

SecurityPlan map_trust_to_plan(const ProtocolSelector& select, const TrustVector& tv, std::uint32_t n) {
  tv.validate();
  if (n < 2) throw Error("group-too-small", "n=" + std::to_string(n));
  auto protocol = select(tv);
  if (protocol == Protocol::PBFT && n < 4) throw Error("plan-infeasible", "PBFT needs n >= 4, got " + std::to_string(n));
  return SecurityPlan::for_group(protocol, n);
}

SecurityPlan map_trust_to_plan(const PlanMapping& m, const TrustVector& tv, std::uint32_t n) {
  // Dimension errors take precedence over trust-vector range errors.
  m.validate();
  if (tv.components.size() != m.dimension())
    throw Error("dimension-mismatch", std::to_string(tv.components.size()) + " vs " + std::to_string(m.dimension()));
  return map_trust_to_plan(linear_selector(m), tv, n);
}

}  // namespace otce
