#pragma once

#include <sodium.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "fldabe/common.hpp"

namespace fldabe {

inline void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) raise(ErrorCode::IoError, "libsodium initialization failed");
}

inline Hash32 sha256(const std::uint8_t* data, std::size_t len) {
  ensure_sodium();
  Hash32 out;
  crypto_hash_sha256(out.data(), data, len);
  return out;
}

inline Hash32 sha256(const Bytes& b) { return sha256(b.data(), b.size()); }

inline Hash32 sha256(std::string_view s) {
  return sha256(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

/// HMAC-SHA256, the PRF behind attribute-key derivation and rng forking.
inline Key32 hmac_sha256(const Key32& key, const Bytes& msg) {
  ensure_sodium();
  Key32 out;
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, msg.data(), msg.size());
  crypto_auth_hmacsha256_final(&st, out.data());
  return out;
}

inline Key32 hmac_sha256(const Key32& key, std::string_view msg) {
  Bytes b(msg.begin(), msg.end());
  return hmac_sha256(key, b);
}

// ---------------------------------------------------------------------------
// Deterministic random generator: a ChaCha20 keystream under a 32-byte seed.
// Distribution sampling (bounded ints, doubles, normals) is implemented here
// rather than with <random> adaptors because std:: distributions are not
// specified bit-exactly across standard libraries, and simulation outputs
// must be byte-reproducible from the seed alone.

class SeededRng {
 public:
  explicit SeededRng(const Key32& seed) : key_(seed) { ensure_sodium(); }

  /// Domain-separated child generator; draws from a fork never affect the parent.
  SeededRng fork(std::string_view label) const {
    ByteWriter w;
    w.str("fork");
    w.str(label);
    return SeededRng(hmac_sha256(key_, w.bytes()));
  }
  SeededRng fork(std::string_view label, std::uint64_t index) const {
    ByteWriter w;
    w.str("fork");
    w.str(label);
    w.u64(index);
    return SeededRng(hmac_sha256(key_, w.bytes()));
  }

  void fill(std::uint8_t* out, std::size_t len) {
    while (len > 0) {
      if (pos_ == block_.size()) refill();
      std::size_t take = std::min(len, block_.size() - pos_);
      std::memcpy(out, block_.data() + pos_, take);
      pos_ += take;
      out += take;
      len -= take;
    }
  }

  Bytes bytes(std::size_t n) {
    Bytes out(n);
    if (n > 0) fill(out.data(), n);
    return out;
  }

  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> out{};
    fill(out.data(), N);
    return out;
  }

  std::uint64_t u64() {
    std::uint8_t b[8];
    fill(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | b[i];
    return v;
  }

  /// Uniform in [0, bound) by rejection sampling; bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) raise(ErrorCode::InvalidParameter, "below(0)");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
      std::uint64_t v = u64();
      if (v < limit) return v % bound;
    }
  }

  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {  // inclusive bounds
    return lo + below(hi - lo + 1);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1p-53; }

  /// Standard normal via Box-Muller; one value per call, pair cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = (static_cast<double>(u64() >> 11) + 1.0) * 0x1p-53;  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  void refill() {
    std::uint8_t nonce[8] = {0};
    sodium_memzero(block_.data(), block_.size());
    crypto_stream_chacha20_xor_ic(block_.data(), block_.data(), block_.size(), nonce, counter_,
                                  key_.data());
    counter_ += block_.size() / 64;
    pos_ = 0;
  }

  Key32 key_;
  std::array<std::uint8_t, 1024> block_{};
  std::size_t pos_ = block_.size();
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline Key32 seed_from_u64(std::uint64_t s) {
  Key32 k{};
  for (int i = 0; i < 8; ++i) k[i] = static_cast<std::uint8_t>(s >> (8 * (7 - i)));
  return k;
}

// ---------------------------------------------------------------------------
// AEAD: ChaCha20-Poly1305 (IETF), 12-byte nonce, 16-byte appended tag.

inline constexpr std::size_t kAeadNonceLen = 12;
inline constexpr std::size_t kAeadTagLen = 16;

inline Bytes aead_seal(const Key32& key, const Bytes& nonce, const Bytes& plaintext,
                       const Bytes& ad) {
  ensure_sodium();
  if (nonce.size() != kAeadNonceLen) raise(ErrorCode::InvalidParameter, "aead nonce must be 12 bytes");
  Bytes ct(plaintext.size() + kAeadTagLen);
  unsigned long long ct_len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(ct.data(), &ct_len, plaintext.data(), plaintext.size(),
                                            ad.data(), ad.size(), nullptr, nonce.data(), key.data());
  ct.resize(ct_len);
  return ct;
}

/// Returns nullopt on tag failure; callers map that to AuthenticationFailure.
inline std::optional<Bytes> aead_open(const Key32& key, const Bytes& nonce, const Bytes& ciphertext,
                                      const Bytes& ad) {
  ensure_sodium();
  if (nonce.size() != kAeadNonceLen || ciphertext.size() < kAeadTagLen) return std::nullopt;
  Bytes pt(ciphertext.size() - kAeadTagLen);
  unsigned long long pt_len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(pt.data(), &pt_len, nullptr, ciphertext.data(),
                                                ciphertext.size(), ad.data(), ad.size(),
                                                nonce.data(), key.data()) != 0) {
    return std::nullopt;
  }
  pt.resize(pt_len);
  return pt;
}

// ---------------------------------------------------------------------------
// Ed25519 signatures (deterministic, 64 bytes).

using Signature = std::array<std::uint8_t, 64>;
using VerifyKey = std::array<std::uint8_t, 32>;

struct SigningKey {
  std::array<std::uint8_t, 64> secret{};
  VerifyKey public_key{};

  static SigningKey from_seed(const Key32& seed) {
    ensure_sodium();
    SigningKey k;
    crypto_sign_seed_keypair(k.public_key.data(), k.secret.data(), seed.data());
    return k;
  }

  Signature sign(const Bytes& msg) const {
    Signature sig{};
    crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), secret.data());
    return sig;
  }
};

inline bool signature_valid(const VerifyKey& pk, const Bytes& msg, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(), pk.data()) == 0;
}

}  // namespace fldabe
