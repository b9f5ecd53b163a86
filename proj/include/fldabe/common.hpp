#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fldabe {

using Bytes = std::vector<std::uint8_t>;
using Hash32 = std::array<std::uint8_t, 32>;
using Key32 = std::array<std::uint8_t, 32>;

enum class ErrorCode {
  UniverseConflict,
  ForeignAttribute,
  UnknownAttribute,
  PolicyNotSatisfied,
  EpochMismatch,
  AuthenticationFailure,
  InvalidParameter,
  PlaintextOutOfRange,
  KeyMismatch,
  IncompleteShares,
  DimensionMismatch,
  ReplayDetected,
  BadSignature,
  UnknownSender,
  EmptyPool,
  EmptyAggregation,
  AuthFailed,
  ConfigError,
  UnresolvableTarget,
  ParseError,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UniverseConflict: return "UniverseConflict";
    case ErrorCode::ForeignAttribute: return "ForeignAttribute";
    case ErrorCode::UnknownAttribute: return "UnknownAttribute";
    case ErrorCode::PolicyNotSatisfied: return "PolicyNotSatisfied";
    case ErrorCode::EpochMismatch: return "EpochMismatch";
    case ErrorCode::AuthenticationFailure: return "AuthenticationFailure";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::PlaintextOutOfRange: return "PlaintextOutOfRange";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::IncompleteShares: return "IncompleteShares";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ReplayDetected: return "ReplayDetected";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::UnknownSender: return "UnknownSender";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::EmptyAggregation: return "EmptyAggregation";
    case ErrorCode::AuthFailed: return "AuthFailed";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::UnresolvableTarget: return "UnresolvableTarget";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception carrying a stable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

// ---------------------------------------------------------------------------
// Hex encoding. Lowercase only; the decoder rejects uppercase so a flipped
// case bit in an exported file cannot alias to the same value.

inline std::string to_hex(const std::uint8_t* data, std::size_t len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xf]);
  }
  return out;
}

inline std::string to_hex(const Bytes& b) { return to_hex(b.data(), b.size()); }

template <std::size_t N>
std::string to_hex(const std::array<std::uint8_t, N>& a) {
  return to_hex(a.data(), N);
}

inline int hex_nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

inline Bytes from_hex(std::string_view s) {
  if (s.size() % 2 != 0) raise(ErrorCode::ParseError, "odd-length hex string");
  Bytes out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_nibble(s[2 * i]);
    int lo = hex_nibble(s[2 * i + 1]);
    if (hi < 0 || lo < 0) raise(ErrorCode::ParseError, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> from_hex_array(std::string_view s) {
  Bytes b = from_hex(s);
  if (b.size() != N) raise(ErrorCode::ParseError, "hex string has wrong length");
  std::array<std::uint8_t, N> out{};
  std::memcpy(out.data(), b.data(), N);
  return out;
}

// ---------------------------------------------------------------------------
// Canonical byte encoding: big-endian integers, u32 length prefixes, fields
// concatenated in declaration order. Ledger hashes and wire bodies both use
// this form, so the two stay bit-identical by construction.

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 7; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void raw(const std::uint8_t* data, std::size_t len) { buf_.insert(buf_.end(), data, data + len); }
  void raw(const Bytes& b) { raw(b.data(), b.size()); }
  template <std::size_t N>
  void raw(const std::array<std::uint8_t, N>& a) {
    raw(a.data(), N);
  }
  void blob(const Bytes& b) {
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  }
  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const Bytes& b) : data_(b.data()), size_(b.size()) {}
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const std::uint8_t* p = take(2);
    return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | p[i];
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | p[i];
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  Bytes blob() {
    std::uint32_t n = u32();
    const std::uint8_t* p = take(n);
    return Bytes(p, p + n);
  }
  std::string str() {
    std::uint32_t n = u32();
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  template <std::size_t N>
  std::array<std::uint8_t, N> arr() {
    const std::uint8_t* p = take(N);
    std::array<std::uint8_t, N> out{};
    std::memcpy(out.data(), p, N);
    return out;
  }
  bool empty() const { return pos_ == size_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (size_ - pos_ < n) raise(ErrorCode::ParseError, "truncated canonical encoding");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace fldabe
