#include <gtest/gtest.h>

#include <random>

#include "otce/security_plan.hpp"

using namespace otce;

namespace {

// Largest f with 3f < n, and largest f with 2f < n, found by counting up.
std::uint32_t pbft_f(std::uint32_t n) {
  std::uint32_t f = 0;
  while (3 * (f + 1) < n) ++f;
  return f;
}
std::uint32_t paxos_f(std::uint32_t n) {
  std::uint32_t f = 0;
  while (2 * (f + 1) < n) ++f;
  return f;
}

std::string code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

}  // namespace

TEST(Plan, HighTrustPicksPaxos) {
  auto p = map_trust_to_plan(PlanMapping{}, TrustVector{{0.9}}, 5);
  EXPECT_EQ(p.protocol, Protocol::Paxos);
  EXPECT_EQ(p.f_max, 2u);
  EXPECT_EQ(p.quorum, 3u);
}

TEST(Plan, LowTrustPicksPbft) {
  auto p = map_trust_to_plan(PlanMapping{}, TrustVector{{0.5}}, 4);
  EXPECT_EQ(p.protocol, Protocol::PBFT);
  EXPECT_EQ(p.f_max, 1u);
  EXPECT_EQ(p.quorum, 3u);
  EXPECT_EQ(p.verify_threshold, 3u);
}

TEST(Plan, SmallPbftGroupInfeasible) {
  EXPECT_EQ(code_of([] { map_trust_to_plan(PlanMapping{}, TrustVector{{0.5}}, 3); }), "plan-infeasible");
  EXPECT_NO_THROW(map_trust_to_plan(PlanMapping{}, TrustVector{{0.9}}, 3));
}

TEST(Plan, ThresholdIsInclusive) {
  EXPECT_EQ(map_trust_to_plan(PlanMapping{}, TrustVector{{0.8}}, 4).protocol, Protocol::Paxos);
}

TEST(Plan, InputErrors) {
  EXPECT_EQ(code_of([] { map_trust_to_plan(PlanMapping{}, TrustVector{{0.5, 0.5}}, 4); }), "dimension-mismatch");
  EXPECT_EQ(code_of([] { map_trust_to_plan(PlanMapping{}, TrustVector{{}}, 4); }), "dimension-mismatch");
  EXPECT_EQ(code_of([] { TrustVector{}.validate(); }), "invalid-trust-vector");
  EXPECT_EQ(code_of([] { map_trust_to_plan(PlanMapping{}, TrustVector{{1.2}}, 4); }), "invalid-trust-vector");
  EXPECT_EQ(code_of([] { map_trust_to_plan(PlanMapping{}, TrustVector{{0.9}}, 1); }), "group-too-small");
  PlanMapping bad;
  bad.tau = 1.5;
  EXPECT_EQ(code_of([&] { bad.validate(); }), "invalid-mapping");
}

TEST(FaultBound, Examples) {
  EXPECT_EQ(fault_bound(Protocol::PBFT, 4), 1u);
  EXPECT_EQ(fault_bound(Protocol::Paxos, 5), 2u);
  EXPECT_EQ(fault_bound(Protocol::PBFT, 1), 0u);
}

TEST(FaultBound, IdentitiesForAllSmallGroups) {
  for (std::uint32_t n = 2; n <= 100; ++n) {
    auto b = SecurityPlan::for_group(Protocol::PBFT, n);
    EXPECT_EQ(b.f_max, pbft_f(n)) << n;
    EXPECT_EQ(b.quorum, n - pbft_f(n)) << n;
    EXPECT_EQ(b.verify_threshold, n - pbft_f(n)) << n;
    EXPECT_LT(3 * b.f_max, n);
    EXPECT_GE(3 * (b.f_max + 1), n);
    // Two quorums always share at least f+1 members.
    EXPECT_GE(2 * b.quorum, n + b.f_max + 1) << n;

    auto x = SecurityPlan::for_group(Protocol::Paxos, n);
    EXPECT_EQ(x.f_max, paxos_f(n)) << n;
    EXPECT_EQ(x.quorum, n / 2 + 1) << n;
    EXPECT_EQ(x.verify_threshold, n - paxos_f(n)) << n;
    EXPECT_GT(2 * x.quorum, n) << n;
    EXPECT_TRUE(b.consistent() && x.consistent());
  }
}

TEST(Plan, ScalingTvAndTauKeepsChoice) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng), tau = u(rng), c = u(rng) * 0.99 + 0.01;
    PlanMapping a;
    a.tau = tau;
    PlanMapping b;
    b.tau = tau * c;
    EXPECT_EQ(map_trust_to_plan(a, TrustVector{{t}}, 7).protocol, map_trust_to_plan(b, TrustVector{{t * c}}, 7).protocol);
  }
}

TEST(Plan, RaisingTrustNeverDowngrades) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    PlanMapping m;
    m.weights = {{u(rng) / 3, u(rng) / 3, u(rng) / 3}};
    m.tau = u(rng);
    TrustVector tv{{u(rng), u(rng), u(rng)}};
    auto before = map_trust_to_plan(m, tv, 6).protocol;
    auto k = static_cast<std::size_t>(i % 3);
    tv.components[k] += (1.0 - tv.components[k]) * u(rng);
    auto after = map_trust_to_plan(m, tv, 6).protocol;
    if (before == Protocol::Paxos) EXPECT_EQ(after, Protocol::Paxos);
  }
}

TEST(Plan, CustomSelector) {
  ProtocolSelector always_pbft = [](const TrustVector&) { return Protocol::PBFT; };
  EXPECT_EQ(map_trust_to_plan(always_pbft, TrustVector{{1.0}}, 7).f_max, 2u);
}

TEST(Plan, EncodeRoundTrip) {
  auto p = SecurityPlan::for_group(Protocol::Paxos, 9);
  auto bytes = p.encode();
  Decoder dec(bytes);
  EXPECT_EQ(SecurityPlan::decode(dec), p);
}
