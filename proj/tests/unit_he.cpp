#include <catch2/catch_amalgamated.hpp>

#include "fldabe/he.hpp"

using namespace fldabe;
using he::BigInt;

// Hand-rolled Miller-Rabin, independent of the boost routine used in keygen.
static bool probably_prime(const BigInt& n, SeededRng& rng, int rounds = 40) {
  if (n < 2) return false;
  for (int p : {2, 3, 5, 7, 11, 13, 17, 19, 23}) {
    if (n == p) return true;
    if (n % p == 0) return false;
  }
  BigInt d = n - 1;
  int r = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++r;
  }
  for (int i = 0; i < rounds; ++i) {
    BigInt a = he::random_below(rng, BigInt(n - 3)) + 2;
    BigInt x = boost::multiprecision::powm(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (int j = 0; j < r - 1; ++j) {
      x = BigInt(x * x % n);
      if (x == n - 1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

TEST_CASE("generated primes pass an independent primality check") {
  SeededRng rng(seed_from_u64(20));
  SeededRng check_rng(seed_from_u64(21));
  for (int i = 0; i < 4; ++i) {
    BigInt p = he::random_prime(rng, 128);
    CHECK(boost::multiprecision::msb(p) + 1 == 128);
    CHECK(boost::multiprecision::bit_test(p, 126));  // second-top bit forced
    CHECK(p % 2 == 1);
    CHECK(probably_prime(p, check_rng));
  }
}

TEST_CASE("keypair structure: modulus size and lambda inverse") {
  SeededRng rng(seed_from_u64(22));
  he::Keypair kp = he::Keypair::generate(256, rng);
  CHECK(boost::multiprecision::msb(kp.pub.n) + 1 == 256);
  CHECK(kp.pub.n_squared == kp.pub.n * kp.pub.n);
  CHECK(BigInt(kp.priv.lambda * kp.priv.mu % kp.pub.n) == 1);
  CHECK_THROWS_AS(he::Keypair::generate(512, rng), Error);

  // deterministic from the rng stream
  SeededRng rng2(seed_from_u64(22));
  he::Keypair kp2 = he::Keypair::generate(256, rng2);
  CHECK(kp.pub.n == kp2.pub.n);
}

TEST_CASE("fingerprint is the truncated hash of the modulus bytes") {
  SeededRng rng(seed_from_u64(23));
  he::Keypair kp = he::Keypair::generate(256, rng);
  Hash32 h = sha256(he::bigint_bytes(kp.pub.n));
  for (int i = 0; i < 16; ++i) CHECK(kp.pub.fingerprint[i] == h[i]);
}

TEST_CASE("encrypt/decrypt round-trips and randomizes") {
  SeededRng rng(seed_from_u64(24));
  he::Keypair kp = he::Keypair::generate(256, rng);
  for (int i = 0; i < 25; ++i) {
    BigInt m = he::random_below(rng, kp.pub.n);
    he::Ciphertext c = he::encrypt(kp.pub, m, rng);
    CHECK(he::decrypt(kp.pub, kp.priv, c) == m);
  }
  he::Ciphertext a = he::encrypt(kp.pub, BigInt(5), rng);
  he::Ciphertext b = he::encrypt(kp.pub, BigInt(5), rng);
  CHECK(a.value != b.value);  // fresh blinding per encryption

  CHECK_THROWS_AS(he::encrypt(kp.pub, BigInt(-1), rng), Error);
  try {
    he::encrypt(kp.pub, kp.pub.n, rng);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PlaintextOutOfRange);
  }
}

TEST_CASE("homomorphic addition and scaling") {
  SeededRng rng(seed_from_u64(25));
  he::Keypair kp = he::Keypair::generate(256, rng);
  for (int i = 0; i < 25; ++i) {
    BigInt a = he::random_below(rng, kp.pub.n);
    BigInt b = he::random_below(rng, kp.pub.n);
    std::uint64_t k = rng.below(1000);
    he::Ciphertext ca = he::encrypt(kp.pub, a, rng);
    he::Ciphertext cb = he::encrypt(kp.pub, b, rng);
    CHECK(he::decrypt(kp.pub, kp.priv, he::add(kp.pub, ca, cb)) == BigInt((a + b) % kp.pub.n));
    CHECK(he::decrypt(kp.pub, kp.priv, he::scale(kp.pub, ca, BigInt(k))) ==
          BigInt(a * k % kp.pub.n));
  }
  he::Ciphertext c0 = he::encrypt(kp.pub, BigInt(9), rng);
  CHECK(he::decrypt(kp.pub, kp.priv, he::scale(kp.pub, c0, BigInt(0))) == 0);
  CHECK_THROWS_AS(he::scale(kp.pub, c0, BigInt(-2)), Error);
}

TEST_CASE("cross-key operations are rejected") {
  SeededRng rng(seed_from_u64(26));
  he::Keypair kp1 = he::Keypair::generate(256, rng);
  he::Keypair kp2 = he::Keypair::generate(256, rng);
  he::Ciphertext c1 = he::encrypt(kp1.pub, BigInt(7), rng);
  he::Ciphertext c2 = he::encrypt(kp2.pub, BigInt(8), rng);
  try {
    he::decrypt(kp2.pub, kp2.priv, c1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::KeyMismatch);
  }
  CHECK_THROWS_AS(he::add(kp1.pub, c1, c2), Error);
  CHECK_THROWS_AS(he::scale(kp2.pub, c1, BigInt(3)), Error);
}

TEST_CASE("ciphertext and public key wire forms round-trip") {
  SeededRng rng(seed_from_u64(27));
  he::Keypair kp = he::Keypair::generate(256, rng);
  he::Ciphertext c = he::encrypt(kp.pub, BigInt(12345), rng);

  ByteWriter w;
  he::encode_ciphertext(w, c);
  Bytes buf = w.take();
  ByteReader r(buf);
  he::Ciphertext c2 = he::decode_ciphertext(r);
  CHECK(c2.value == c.value);
  CHECK(c2.key_fingerprint == c.key_fingerprint);

  ByteWriter w2;
  he::encode_public_key(w2, kp.pub);
  Bytes buf2 = w2.take();
  ByteReader r2(buf2);
  he::PublicKey pk = he::decode_public_key(r2);
  CHECK(pk.n == kp.pub.n);
  CHECK(pk.n_squared == kp.pub.n_squared);
  CHECK(pk.fingerprint == kp.pub.fingerprint);
}

TEST_CASE("bigint byte helpers agree with hex") {
  BigInt v("0x0102030405");
  Bytes b = he::bigint_bytes(v);
  CHECK(to_hex(b) == "0102030405");
  CHECK(he::bigint_from_bytes(b) == v);
  CHECK(to_hex(he::bigint_bytes(BigInt(0))) == "00");  // zero keeps one byte
  CHECK(he::bigint_from_bytes(he::bigint_bytes(BigInt(0))) == 0);
}
