#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace otce {

/// Opaque node identifier. Ordering is lexicographic on the underlying name,
/// which is the tiebreak order used wherever "smallest node id" matters.
class NodeId {
public:
  NodeId() = default;
  explicit NodeId(std::string name) : name_(std::move(name)) {}

  const std::string& str() const { return name_; }
  bool empty() const { return name_.empty(); }

  auto operator<=>(const NodeId&) const = default;

private:
  std::string name_;
};

inline std::ostream& operator<<(std::ostream& os, const NodeId& id) { return os << id.str(); }

/// Ledger block height; the simulation's global logical clock.
using Height = std::uint64_t;

/// Discrete simulated network time.
using Tick = std::uint64_t;

}  // namespace otce

template <>
struct std::hash<otce::NodeId> {
  std::size_t operator()(const otce::NodeId& id) const noexcept { return std::hash<std::string>{}(id.str()); }
};

namespace otce {

/// Harness-level error with a stable machine-readable code such as
/// "unknown-member" or "plan-infeasible".
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

private:
  std::string code_;
};

}  // namespace otce
