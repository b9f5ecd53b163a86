#pragma once

#include <array>
#include <cstdint>

#include "fldabe/common.hpp"

namespace fldabe {

/// GF(2^128) with the GCM reduction polynomial x^128 + x^7 + x^2 + x + 1.
/// Bit i of the value is the coefficient of x^i. Used by the access-policy
/// secret sharing; addition is xor, so AND-gate splits cost nothing.
struct Gf128 {
  using u128 = unsigned __int128;
  u128 v = 0;

  static Gf128 zero() { return {}; }
  static Gf128 one() { return {1}; }

  static Gf128 from_u64(std::uint64_t x) { return {static_cast<u128>(x)}; }

  static Gf128 from_bytes(const std::array<std::uint8_t, 16>& b) {
    u128 v = 0;
    for (int i = 0; i < 16; ++i) v = v << 8 | b[i];
    return {v};
  }

  std::array<std::uint8_t, 16> to_bytes() const {
    std::array<std::uint8_t, 16> out{};
    u128 x = v;
    for (int i = 15; i >= 0; --i) {
      out[i] = static_cast<std::uint8_t>(x);
      x >>= 8;
    }
    return out;
  }

  bool is_zero() const { return v == 0; }
  friend bool operator==(Gf128 a, Gf128 b) { return a.v == b.v; }

  friend Gf128 operator+(Gf128 a, Gf128 b) { return {a.v ^ b.v}; }
  friend Gf128 operator-(Gf128 a, Gf128 b) { return {a.v ^ b.v}; }

  friend Gf128 operator*(Gf128 a, Gf128 b) {
    u128 r = 0;
    u128 x = a.v;
    u128 y = b.v;
    while (y != 0) {
      if (y & 1) r ^= x;
      bool carry = (x >> 127) != 0;
      x <<= 1;
      if (carry) x ^= 0x87;  // feedback taps of the reduction polynomial
      y >>= 1;
    }
    return {r};
  }

  Gf128 pow(u128 e) const {
    Gf128 result = one();
    Gf128 base = *this;
    while (e != 0) {
      if (e & 1) result = result * base;
      base = base * base;
      e >>= 1;
    }
    return result;
  }

  /// Multiplicative inverse by Fermat: a^(2^128 - 2). Zero has no inverse.
  Gf128 inv() const {
    if (is_zero()) raise(ErrorCode::InvalidParameter, "inverse of zero in GF(2^128)");
    u128 e = ~static_cast<u128>(1);  // 2^128 - 2
    return pow(e);
  }
};

}  // namespace fldabe
