#pragma once

#include <cstdint>
#include <vector>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"

namespace fldabe::smpc {

/// Production field: integers mod the Mersenne prime 2^127 - 1.
struct Mersenne127 {
  using value_type = unsigned __int128;

  static constexpr value_type modulus() {
    return (static_cast<value_type>(1) << 127) - 1;
  }

  static value_type add(value_type a, value_type b) {
    value_type s = a + b;  // < 2^128, no overflow
    if (s >= modulus()) s -= modulus();
    return s;
  }

  static value_type sub(value_type a, value_type b) {
    return a >= b ? a - b : modulus() - (b - a);
  }

  static value_type mul(value_type a, value_type b) {
    // 128x128 -> 256 via 64-bit limbs, then fold: 2^128 = 2 mod p.
    const value_type mask64 = (static_cast<value_type>(1) << 64) - 1;
    value_type a0 = a & mask64, a1 = a >> 64;
    value_type b0 = b & mask64, b1 = b >> 64;
    value_type p00 = a0 * b0;
    value_type p01 = a0 * b1;
    value_type p10 = a1 * b0;
    value_type p11 = a1 * b1;
    value_type mid = (p00 >> 64) + (p01 & mask64) + (p10 & mask64);
    value_type lo = (p00 & mask64) | (mid << 64);
    value_type hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    value_type r_lo = (lo & modulus()) + (lo >> 127);           // lo mod p, < p + 2
    if (r_lo >= modulus()) r_lo -= modulus();
    value_type r_hi = ((hi << 1) & modulus()) + (hi >> 126);    // 2*hi mod p, < p + 4
    while (r_hi >= modulus()) r_hi -= modulus();
    value_type r = r_lo + r_hi;                                 // < 2p, no overflow
    if (r >= modulus()) r -= modulus();
    return r;
  }

  static value_type sample(SeededRng& rng) {
    for (;;) {
      auto b = rng.array<16>();
      value_type v = 0;
      for (std::uint8_t byte : b) v = v << 8 | byte;
      v &= modulus();  // 127 low bits; equals p itself with prob 2^-127
      if (v < modulus()) return v;
    }
  }

  static void encode(ByteWriter& w, value_type v) {
    w.u64(static_cast<std::uint64_t>(v >> 64));
    w.u64(static_cast<std::uint64_t>(v));
  }
};

/// Reduced field for share-uniformity statistics.
template <std::uint64_t P>
struct SmallPrimeField {
  using value_type = std::uint64_t;

  static constexpr value_type modulus() { return P; }
  static value_type add(value_type a, value_type b) { return (a + b) % P; }
  static value_type sub(value_type a, value_type b) { return (a + P - b % P) % P; }
  static value_type mul(value_type a, value_type b) { return a * b % P; }
  static value_type sample(SeededRng& rng) { return rng.below(P); }
  static void encode(ByteWriter& w, value_type v) { w.u64(v); }
};

template <typename F>
struct ShareSet {
  using value_type = typename F::value_type;

  struct Share {
    std::uint32_t participant_id = 0;
    std::vector<value_type> values;  // secret_dim entries
  };

  std::uint32_t n_participants = 0;
  std::uint32_t secret_dim = 1;
  std::vector<Share> shares;
};

template <typename F>
ShareSet<F> share_vector(const std::vector<typename F::value_type>& secret, std::uint32_t n,
                         SeededRng& rng) {
  if (n < 2) raise(ErrorCode::InvalidParameter, "additive sharing needs at least 2 participants");
  if (secret.empty()) raise(ErrorCode::InvalidParameter, "empty secret");
  ShareSet<F> out;
  out.n_participants = n;
  out.secret_dim = static_cast<std::uint32_t>(secret.size());
  out.shares.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    out.shares[i].participant_id = i;
    out.shares[i].values.resize(secret.size());
  }
  for (std::size_t c = 0; c < secret.size(); ++c) {
    typename F::value_type acc = 0;
    for (std::uint32_t i = 0; i + 1 < n; ++i) {
      auto r = F::sample(rng);
      out.shares[i].values[c] = r;
      acc = F::add(acc, r);
    }
    out.shares[n - 1].values[c] = F::sub(secret[c] % F::modulus(), acc);
  }
  return out;
}

template <typename F>
ShareSet<F> share_secret(typename F::value_type secret, std::uint32_t n, SeededRng& rng) {
  return share_vector<F>(std::vector<typename F::value_type>{secret}, n, rng);
}

template <typename F>
std::vector<typename F::value_type> reconstruct_vector(const ShareSet<F>& ss) {
  if (ss.shares.size() != ss.n_participants) {
    raise(ErrorCode::IncompleteShares, "have " + std::to_string(ss.shares.size()) + " of " +
                                            std::to_string(ss.n_participants) + " shares");
  }
  std::vector<bool> seen(ss.n_participants, false);
  std::vector<typename F::value_type> out(ss.secret_dim, 0);
  for (const auto& sh : ss.shares) {
    if (sh.participant_id >= ss.n_participants || seen[sh.participant_id]) {
      raise(ErrorCode::IncompleteShares, "duplicate or out-of-range participant id");
    }
    seen[sh.participant_id] = true;
    if (sh.values.size() != ss.secret_dim) {
      raise(ErrorCode::DimensionMismatch, "share dimension mismatch");
    }
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = F::add(out[c], sh.values[c]);
  }
  return out;
}

template <typename F>
typename F::value_type reconstruct_secret(const ShareSet<F>& ss) {
  if (ss.secret_dim != 1) raise(ErrorCode::DimensionMismatch, "scalar reconstruct on vector shares");
  return reconstruct_vector(ss)[0];
}

/// Share-wise sum of two sharings of equal shape; reconstructs to the sum of
/// the two secrets.
template <typename F>
ShareSet<F> add_share_sets(const ShareSet<F>& a, const ShareSet<F>& b) {
  if (a.n_participants != b.n_participants || a.secret_dim != b.secret_dim) {
    raise(ErrorCode::DimensionMismatch, "share sets have different shapes");
  }
  ShareSet<F> out = a;
  for (std::uint32_t i = 0; i < a.n_participants; ++i) {
    for (std::uint32_t c = 0; c < a.secret_dim; ++c) {
      out.shares[i].values[c] = F::add(a.shares[i].values[c], b.shares[i].values[c]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulated n-party vector sum. Participant i splits its input into n share
// vectors, keeps one, sends the rest; everyone publishes only the sum of the
// shares they hold. The transcript records exactly what went over the
// (simulated) wire: shares and partial sums, never the inputs.

template <typename F>
struct Transcript {
  using value_type = typename F::value_type;

  std::uint32_t n = 0;
  std::uint32_t dim = 0;
  // sent[i][j] = share vector participant i handed to participant j
  std::vector<std::vector<std::vector<value_type>>> sent;
  std::vector<std::vector<value_type>> partials;  // per receiving participant

  Bytes canonical_bytes() const {
    ByteWriter w;
    w.str("smpc-transcript-v1");
    w.u32(n);
    w.u32(dim);
    for (const auto& row : sent) {
      for (const auto& vec : row) {
        for (auto v : vec) F::encode(w, v);
      }
    }
    for (const auto& vec : partials) {
      for (auto v : vec) F::encode(w, v);
    }
    return w.take();
  }

  Hash32 hash() const { return sha256(canonical_bytes()); }
};

template <typename F>
struct SumResult {
  using value_type = typename F::value_type;

  std::vector<std::vector<value_type>> partials;  // per participant
  std::vector<value_type> total;                  // sum of partials mod p
  Transcript<F> transcript;
};

template <typename F>
SumResult<F> secure_vector_sum(const std::vector<std::vector<typename F::value_type>>& inputs,
                               SeededRng& rng) {
  using V = typename F::value_type;
  const std::uint32_t n = static_cast<std::uint32_t>(inputs.size());
  if (n < 1) raise(ErrorCode::InvalidParameter, "no participants");
  const std::size_t d = inputs[0].size();
  if (d == 0) raise(ErrorCode::DimensionMismatch, "zero-dimensional input");
  for (const auto& v : inputs) {
    if (v.size() != d) raise(ErrorCode::DimensionMismatch, "participant vectors differ in dimension");
  }

  SumResult<F> out;
  out.transcript.n = n;
  out.transcript.dim = static_cast<std::uint32_t>(d);
  out.transcript.sent.assign(n, std::vector<std::vector<V>>(n, std::vector<V>(d, 0)));

  // n == 1 degenerates to the participant publishing its own (unblinded) sum;
  // callers that need privacy must run with n >= 2.
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      V acc = 0;
      for (std::uint32_t j = 0; j + 1 < n; ++j) {
        V r = F::sample(rng);
        out.transcript.sent[i][j][c] = r;
        acc = F::add(acc, r);
      }
      out.transcript.sent[i][n - 1][c] = F::sub(inputs[i][c] % F::modulus(), acc);
    }
  }

  out.partials.assign(n, std::vector<V>(d, 0));
  for (std::uint32_t j = 0; j < n; ++j) {
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        out.partials[j][c] = F::add(out.partials[j][c], out.transcript.sent[i][j][c]);
      }
    }
  }
  out.transcript.partials = out.partials;

  out.total.assign(d, 0);
  for (std::uint32_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < d; ++c) out.total[c] = F::add(out.total[c], out.partials[j][c]);
  }
  return out;
}

}  // namespace fldabe::smpc
