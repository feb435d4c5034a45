#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "otce/did_registry.hpp"

using namespace otce;
using namespace otce::did;
using ledger::TxKind;
using ledger::TxStatus;

namespace {

AttestationPolicy policy() {
  AttestationPolicy p;
  p.required["name"] = {1, 32, Encoding::Ascii};
  p.required["face"] = {64, 64, Encoding::Hex};
  return p;
}

std::map<std::string, Bytes> good_attrs(const std::string& name = "alice") {
  return {{"name", to_bytes(name)}, {"face", to_bytes(to_hex(crypto::digest_bytes(to_bytes(name))))}};
}

struct World {
  ledger::Ledger ledger{8};
  crypto::Keyring keys{8};
  DIDRegistry reg{policy()};

  World() {
    for (auto n : {"a", "b"}) ledger.register_key(NodeId(n), keys.ensure(NodeId(n)).public_key());
    ledger.add_contract(reg);
  }

  const ledger::TxRecord& run(const RegisterDID& body, const char* sender = "a") {
    auto tx = ledger::Transaction::make(TxKind::RegisterDID, body.encode(), NodeId(sender), keys.at(NodeId(sender)));
    EXPECT_TRUE(ledger.submit_tx(tx).accepted());
    ledger.seal_block();
    return ledger.chain().back().txs.front();
  }
};

std::uint64_t lagrange_oracle(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& pts, std::uint64_t p) {
  // Independent small-modulus interpolation using Fermat inverses by repeated multiplication.
  auto powm = [p](std::uint64_t a, std::uint64_t e) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 0; i < e; ++i) r = r * a % p;
    return r;
  };
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::uint64_t num = 1, den = 1;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      num = num * (p - pts[j].first % p) % p;
      den = den * ((pts[i].first + p - pts[j].first) % p) % p;
    }
    acc = (acc + pts[i].second * num % p * powm(den, p - 2)) % p;
  }
  return acc;
}

}  // namespace

TEST(Did, IdentifierIsDerivedFromKey) {
  auto k = crypto::KeyPair::derive("x", 1).public_key();
  auto id = did_for(k);
  EXPECT_TRUE(id.starts_with("did:otce:"));
  EXPECT_EQ(id.size(), 9u + 32u);
  EXPECT_EQ(id, did_for(k));
}

TEST(Did, ValidRegistrationCommitted) {
  World w;
  auto key = crypto::KeyPair::derive("user", 1).public_key();
  EXPECT_EQ(w.run({key, good_attrs()}).status, TxStatus::Ok);
  const auto* rec = w.reg.find(did_for(key));
  ASSERT_NE(rec, nullptr);
  EXPECT_EQ(rec->registered_at, 1u);
  EXPECT_EQ(rec->owner, NodeId("a"));
}

TEST(Did, MissingAttributeFails) {
  World w;
  auto attrs = good_attrs();
  attrs.erase("face");
  const auto& r = w.run({crypto::KeyPair::derive("user", 1).public_key(), attrs});
  EXPECT_EQ(r.status, TxStatus::Failed);
  EXPECT_EQ(r.reason, "missing-attribute:face");
  EXPECT_TRUE(w.reg.records().empty());
}

TEST(Did, FormatViolationsFail) {
  World w;
  auto key = crypto::KeyPair::derive("user", 1).public_key();
  auto attrs = good_attrs();
  attrs["face"][0] = 'z';
  EXPECT_EQ(w.run({key, attrs}).reason, "bad-encoding:face");
  attrs = good_attrs();
  attrs["name"] = to_bytes(std::string(40, 'n'));
  EXPECT_EQ(w.run({key, attrs}).reason, "bad-length:name");
}

TEST(Did, SameKeyTwiceRejected) {
  World w;
  auto key = crypto::KeyPair::derive("user", 1).public_key();
  EXPECT_EQ(w.run({key, good_attrs("alice")}).status, TxStatus::Ok);
  const auto& second = w.run({key, good_attrs("mallory")}, "b");
  EXPECT_EQ(second.status, TxStatus::Failed);
  EXPECT_EQ(second.reason, "duplicate-did");
  EXPECT_EQ(w.reg.records().size(), 1u);
}

TEST(Did, EmptyPolicyRejected) { EXPECT_THROW(DIDRegistry{AttestationPolicy{}}, Error); }

TEST(Did, ReplayRebuildsRegistry) {
  World w;
  for (int i = 0; i < 5; ++i) w.run({crypto::KeyPair::derive("u", static_cast<std::uint64_t>(i % 3)).public_key(), good_attrs("n" + std::to_string(i))});
  DIDRegistry fresh(policy());
  EXPECT_FALSE(ledger::Ledger::replay(w.ledger.chain(), {&fresh}));
  EXPECT_EQ(fresh.state_dump(), w.reg.state_dump());
  EXPECT_EQ(fresh.records().size(), 3u);
}

TEST(Field, ArithmeticMatchesWideIntegers) {
  PrimeField f;
  std::mt19937_64 rng(1);
  const auto p = f.modulus();
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t a = rng() % p, b = rng() % p;
    __extension__ using Wide = unsigned __int128;
    EXPECT_EQ(f.mul(a, b), static_cast<std::uint64_t>(static_cast<Wide>(a) * b % p));
    EXPECT_EQ(f.add(a, b), static_cast<std::uint64_t>((static_cast<Wide>(a) + b) % p));
    if (a != 0) EXPECT_EQ(f.mul(a, f.inv(a)), 1u);
  }
  EXPECT_THROW(f.inv(0), Error);
}

TEST(Sharing, ThresholdOneIsConstant) {
  std::mt19937_64 rng(1);
  for (const auto& s : share_secret(42, 1, 3, rng)) EXPECT_EQ(s.value, 42u);
}

TEST(Sharing, AnyTwoOfThreeReconstruct) {
  std::mt19937_64 rng(2);
  auto shares = share_secret(42, 2, 3, rng);
  for (const auto& pair : oracle::subsets(3, 2)) EXPECT_EQ(reconstruct({shares[pair[0]], shares[pair[1]]}, 2), 42u);
}

TEST(Sharing, TooFewSharesRejected) {
  std::mt19937_64 rng(3);
  auto shares = share_secret(42, 3, 5, rng);
  try {
    reconstruct({shares[0], shares[1]}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "insufficient-shares");
  }
}

TEST(Sharing, InvalidParameters) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(share_secret(1, 0, 3, rng), Error);
  EXPECT_THROW(share_secret(1, 4, 3, rng), Error);
  EXPECT_THROW(share_secret(PrimeField::kDefaultModulus, 2, 3, rng), Error);
  auto s = share_secret(9, 2, 3, rng);
  EXPECT_THROW(reconstruct({s[0], s[0]}, 2), Error);
}

TEST(Sharing, RoundTripAllSmallConfigurations) {
  std::mt19937_64 rng(4);
  for (std::uint32_t n = 1; n <= 7; ++n)
    for (std::uint32_t t = 1; t <= n; ++t)
      for (int trial = 0; trial < 20; ++trial) {
        const auto secret = rng() % PrimeField::kDefaultModulus;
        auto shares = share_secret(secret, t, n, rng);
        for (const auto& sub : oracle::subsets(n, t)) {
          std::vector<SecretShare> pick;
          for (auto i : sub) pick.push_back(shares[i]);
          ASSERT_EQ(reconstruct(pick, t), secret);
        }
      }
}

TEST(Sharing, SmallFieldMatchesIndependentInterpolation) {
  PrimeField f(257);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t secret = rng() % 257;
    auto shares = share_secret(secret, 3, 5, rng, f);
    for (const auto& sub : oracle::subsets(5, 3)) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> pts;
      for (auto i : sub) pts.emplace_back(shares[i].index, shares[i].value);
      ASSERT_EQ(lagrange_oracle(pts, 257), secret);
    }
  }
}

TEST(Sharing, TwoSharesOfThreeRevealNothing) {
  // For each pair of observed shares, count the degree-2 polynomials through
  // them for every candidate secret. Exactly one per candidate means the
  // observation leaves every secret equally likely.
  constexpr std::uint64_t p = 257;
  PrimeField f(p);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto shares = share_secret(rng() % p, 3, 5, rng, f);
    for (const auto& pair : oracle::subsets(5, 2)) {
      const auto& s1 = shares[pair[0]];
      const auto& s2 = shares[pair[1]];
      // The first share pins a2 once cand and a1 are fixed: a2 = (y1 - cand - a1 x1) / x1^2.
      const std::uint64_t x1 = s1.index, sq = x1 * x1 % p;
      std::uint64_t inv_sq = 1;
      while (inv_sq * sq % p != 1) ++inv_sq;
      for (std::uint64_t cand = 0; cand < p; ++cand) {
        int consistent = 0;
        for (std::uint64_t a1 = 0; a1 < p; ++a1) {
          const std::uint64_t a2 = (s1.value + 2 * p - cand - a1 * x1 % p) % p * inv_sq % p;
          ASSERT_EQ(oracle::poly_eval_small({cand, a1, a2}, x1, p), s1.value);
          if (oracle::poly_eval_small({cand, a1, a2}, s2.index, p) == s2.value) ++consistent;
        }
        ASSERT_EQ(consistent, 1) << "candidate " << cand;
      }
    }
  }
}

TEST(Sharing, MismatchedSharingsFailCommitment) {
  std::mt19937_64 rng(7);
  const std::uint64_t secret = 123456789;
  const auto commitment = commit_secret(secret);
  auto first = share_secret(secret, 2, 3, rng);
  auto second = share_secret(secret, 2, 3, rng);
  ASSERT_NE(first[1].value, second[1].value);
  EXPECT_EQ(commit_secret(reconstruct({first[0], first[1]}, 2)), commitment);
  EXPECT_NE(commit_secret(reconstruct({first[0], second[1]}, 2)), commitment);
}

TEST(Sharing, LabelledSharingsCannotBeMixed) {
  std::mt19937_64 rng(8);
  PrimeField f;
  auto g1 = share_secret(5, 2, 3, rng, f, "g1");
  auto g2 = share_secret(5, 2, 3, rng, f, "g2");
  try {
    reconstruct({g1[0], g2[1]}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "mixed-sharings");
  }
}

TEST(Sharing, ShareValuesLookUniform) {
  constexpr std::uint64_t p = 257;
  PrimeField f(p);
  std::mt19937_64 rng(9);
  const int per_bin = 100;
  std::vector<int> bins(p, 0);
  for (std::uint64_t i = 0; i < p * per_bin; ++i) ++bins[share_secret(7, 2, 3, rng, f)[1].value];
  double chi2 = 0;
  for (int b : bins) chi2 += (b - per_bin) * (b - per_bin) / static_cast<double>(per_bin);
  // 256 degrees of freedom: mean 256, sd about 22.6. Allow five sd.
  EXPECT_LT(chi2, 256 + 5 * 22.63);
  EXPECT_GT(chi2, 256 - 5 * 22.63);
}
