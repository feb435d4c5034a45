#include <gtest/gtest.h>

#include "otce/crypto.hpp"

using namespace otce;

TEST(Hex, RoundTripAndRejects) {
  const Bytes b{0x00, 0x7f, 0xff, 0x10};
  EXPECT_EQ(to_hex(b), "007fff10");
  EXPECT_EQ(from_hex("007fff10"), b);
  EXPECT_EQ(from_hex("ABcd"), (Bytes{0xab, 0xcd}));
  EXPECT_THROW(from_hex("abc"), std::invalid_argument);
  EXPECT_THROW(from_hex("zz"), std::invalid_argument);
}

TEST(Encoding, IntegersAreBigEndian) {
  Encoder e;
  e.u32(0x01020304).u64(5);
  EXPECT_EQ(e.data(), (Bytes{1, 2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 5}));
}

TEST(Encoding, RoundTrip) {
  Encoder e;
  e.u8(9).u32(70000).u64(~0ull).f64(-0.125).bytes(to_bytes("xyz")).str("").strs({"a", "bc"});
  Decoder d(e.data());
  EXPECT_EQ(d.u8(), 9);
  EXPECT_EQ(d.u32(), 70000u);
  EXPECT_EQ(d.u64(), ~0ull);
  EXPECT_EQ(d.f64(), -0.125);
  EXPECT_EQ(d.bytes(), to_bytes("xyz"));
  EXPECT_EQ(d.str(), "");
  EXPECT_EQ(d.strs(), (std::vector<std::string>{"a", "bc"}));
  EXPECT_NO_THROW(d.expect_done());
}

TEST(Encoding, LengthPrefixSeparatesFields) {
  // ("ab","c") and ("a","bc") concatenate to the same bytes but must not encode alike.
  Encoder x, y;
  x.str("ab").str("c");
  y.str("a").str("bc");
  EXPECT_NE(x.data(), y.data());
}

TEST(Decoding, TruncatedAndTrailingInputFail) {
  Encoder e;
  e.str("hello");
  auto b = e.data();
  b.pop_back();
  Decoder short_in(b);
  EXPECT_THROW(short_in.str(), DecodeError);

  auto longer = e.data();
  longer.push_back(0);
  Decoder trailing(longer);
  trailing.str();
  EXPECT_THROW(trailing.expect_done(), DecodeError);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(crypto::digest_bytes(to_bytes(""))),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(to_hex(crypto::digest_bytes(to_bytes("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Signatures, VerifyAndReject) {
  auto k = crypto::KeyPair::derive("node", 1);
  auto sig = k.sign(to_bytes("msg"));
  EXPECT_EQ(sig.size(), 64u);
  EXPECT_TRUE(crypto::verify(k.public_key(), to_bytes("msg"), sig));
  EXPECT_FALSE(crypto::verify(k.public_key(), to_bytes("msh"), sig));
  sig[3] ^= 1;
  EXPECT_FALSE(crypto::verify(k.public_key(), to_bytes("msg"), sig));
  EXPECT_FALSE(crypto::verify(k.public_key(), to_bytes("msg"), Bytes(10, 0)));
}

TEST(Keys, DerivationIsDeterministicPerLabelAndSeed) {
  EXPECT_EQ(crypto::KeyPair::derive("a", 1).public_key(), crypto::KeyPair::derive("a", 1).public_key());
  EXPECT_NE(crypto::KeyPair::derive("a", 1).public_key(), crypto::KeyPair::derive("a", 2).public_key());
  EXPECT_NE(crypto::KeyPair::derive("a", 1).public_key(), crypto::KeyPair::derive("b", 1).public_key());
}

TEST(Keys, DirectoryChecksRegisteredKeyOnly) {
  crypto::Keyring ring(4);
  const auto& a = ring.ensure(NodeId("a"));
  ring.ensure(NodeId("b"));
  auto sig = a.sign(to_bytes("m"));
  EXPECT_TRUE(ring.directory().verify(NodeId("a"), to_bytes("m"), sig));
  EXPECT_FALSE(ring.directory().verify(NodeId("b"), to_bytes("m"), sig));
  EXPECT_FALSE(ring.directory().verify(NodeId("ghost"), to_bytes("m"), sig));
  EXPECT_THROW(ring.at(NodeId("ghost")), std::exception);
}
