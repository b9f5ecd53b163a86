#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <boost/integer/mod_inverse.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <boost/multiprecision/miller_rabin.hpp>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"

namespace fldabe::he {

using BigInt = boost::multiprecision::cpp_int;

inline Bytes bigint_bytes(const BigInt& x) {
  if (x < 0) raise(ErrorCode::InvalidParameter, "negative bigint has no wire form");
  Bytes out;
  boost::multiprecision::export_bits(x, std::back_inserter(out), 8);
  return out;  // big-endian, minimal length (single 0x00 for zero)
}

inline BigInt bigint_from_bytes(const Bytes& b) {
  BigInt x;
  boost::multiprecision::import_bits(x, b.begin(), b.end(), 8);
  return x;
}

inline std::string bigint_hex(const BigInt& x) { return to_hex(bigint_bytes(x)); }

/// Uniform value in [0, bound) by rejection from the deterministic stream.
inline BigInt random_below(SeededRng& rng, const BigInt& bound) {
  if (bound <= 0) raise(ErrorCode::InvalidParameter, "random_below: bound must be positive");
  const std::size_t bits = boost::multiprecision::msb(bound) + 1;
  const std::size_t nbytes = (bits + 7) / 8;
  const unsigned top_excess = static_cast<unsigned>(nbytes * 8 - bits);
  for (;;) {
    Bytes buf = rng.bytes(nbytes);
    buf[0] &= static_cast<std::uint8_t>(0xff >> top_excess);
    BigInt x = bigint_from_bytes(buf);
    if (x < bound) return x;
  }
}

/// Odd candidate of exactly `bits` bits with the top two bits forced, so the
/// product of two such primes has exactly 2*bits bits.
inline BigInt random_prime(SeededRng& rng, unsigned bits) {
  if (bits < 8) raise(ErrorCode::InvalidParameter, "prime size too small");
  std::mt19937_64 witness_rng(rng.u64());
  for (;;) {
    Bytes buf = rng.bytes(bits / 8);
    buf[0] |= 0xc0;
    buf[bits / 8 - 1] |= 0x01;
    BigInt cand = bigint_from_bytes(buf);
    if (boost::multiprecision::miller_rabin_test(cand, 40, witness_rng)) return cand;
  }
}

struct PublicKey {
  BigInt n;
  BigInt n_squared;
  std::array<std::uint8_t, 16> fingerprint{};

  static PublicKey from_n(BigInt n_in) {
    PublicKey pk;
    pk.n = std::move(n_in);
    pk.n_squared = pk.n * pk.n;
    Hash32 h = sha256(bigint_bytes(pk.n));
    std::copy_n(h.begin(), pk.fingerprint.size(), pk.fingerprint.begin());
    return pk;
  }

  std::string fingerprint_hex() const { return to_hex(fingerprint); }
};

struct PrivateKey {
  BigInt lambda;  // lcm(p-1, q-1)
  BigInt mu;      // lambda^{-1} mod n
};

struct Ciphertext {
  BigInt value;
  std::array<std::uint8_t, 16> key_fingerprint{};
};

class Keypair {
 public:
  PublicKey pub;
  PrivateKey priv;

  /// bits is the modulus size; supported sizes: 256 (test profile), 1024, 2048.
  static Keypair generate(unsigned bits, SeededRng& rng) {
    if (bits != 256 && bits != 1024 && bits != 2048) {
      raise(ErrorCode::InvalidParameter, "unsupported modulus size " + std::to_string(bits));
    }
    for (;;) {
      BigInt p = random_prime(rng, bits / 2);
      BigInt q = random_prime(rng, bits / 2);
      if (p == q) continue;
      BigInt n = p * q;
      if (boost::multiprecision::msb(n) + 1 != bits) continue;  // cannot happen with forced top bits
      Keypair kp;
      kp.pub = PublicKey::from_n(n);
      BigInt pm1 = p - 1;
      BigInt qm1 = q - 1;
      kp.priv.lambda = pm1 * qm1 / boost::multiprecision::gcd(pm1, qm1);
      kp.priv.mu = boost::integer::mod_inverse(BigInt(kp.priv.lambda % n), n);
      if (kp.priv.mu == 0) continue;  // lambda not invertible mod n: reject pair
      return kp;
    }
  }
};

/// Enc(m, r) = (1 + m*n) * r^n mod n^2, using the g = n+1 shortcut.
inline Ciphertext encrypt(const PublicKey& pk, const BigInt& m, SeededRng& rng) {
  if (m < 0 || m >= pk.n) raise(ErrorCode::PlaintextOutOfRange, "plaintext must lie in [0, n)");
  BigInt r;
  do {
    r = random_below(rng, pk.n);
  } while (r == 0 || boost::multiprecision::gcd(r, pk.n) != 1);
  BigInt g_m = (1 + m * pk.n) % pk.n_squared;
  BigInt r_n = boost::multiprecision::powm(r, pk.n, pk.n_squared);
  return Ciphertext{g_m * r_n % pk.n_squared, pk.fingerprint};
}

inline BigInt decrypt(const PublicKey& pk, const PrivateKey& sk, const Ciphertext& ct) {
  if (ct.key_fingerprint != pk.fingerprint) {
    raise(ErrorCode::KeyMismatch, "ciphertext was produced under a different key");
  }
  BigInt u = boost::multiprecision::powm(ct.value, sk.lambda, pk.n_squared);
  BigInt l = (u - 1) / pk.n;  // L(u) with u = 1 mod n guaranteed by construction
  return BigInt(l * sk.mu % pk.n);
}

/// Homomorphic addition: Dec(add(a, b)) = Dec(a) + Dec(b) mod n.
inline Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  if (a.key_fingerprint != pk.fingerprint || b.key_fingerprint != pk.fingerprint) {
    raise(ErrorCode::KeyMismatch, "cannot add ciphertexts across keys");
  }
  return Ciphertext{BigInt(a.value * b.value % pk.n_squared), pk.fingerprint};
}

/// Homomorphic scalar multiply: Dec(scale(a, k)) = k * Dec(a) mod n.
inline Ciphertext scale(const PublicKey& pk, const Ciphertext& a, const BigInt& k) {
  if (a.key_fingerprint != pk.fingerprint) {
    raise(ErrorCode::KeyMismatch, "ciphertext was produced under a different key");
  }
  if (k < 0) raise(ErrorCode::InvalidParameter, "scalar must be non-negative");
  return Ciphertext{boost::multiprecision::powm(a.value, k, pk.n_squared), pk.fingerprint};
}

// ---------------------------------------------------------------------------
// Wire forms.

inline void encode_ciphertext(ByteWriter& w, const Ciphertext& ct) {
  w.raw(ct.key_fingerprint.data(), ct.key_fingerprint.size());
  w.blob(bigint_bytes(ct.value));
}

inline Ciphertext decode_ciphertext(ByteReader& r) {
  Ciphertext ct;
  ct.key_fingerprint = r.arr<16>();
  ct.value = bigint_from_bytes(r.blob());
  return ct;
}

inline void encode_public_key(ByteWriter& w, const PublicKey& pk) { w.blob(bigint_bytes(pk.n)); }

inline PublicKey decode_public_key(ByteReader& r) { return PublicKey::from_n(bigint_from_bytes(r.blob())); }

}  // namespace fldabe::he
