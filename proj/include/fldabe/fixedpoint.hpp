#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fldabe/common.hpp"

namespace fldabe::fp {

inline constexpr std::int64_t kScale = 1 << 16;
inline constexpr double kClip = 8.0;

namespace detail {
inline double to_double(unsigned __int128 v) { return static_cast<double>(v); }
template <typename Int>
double to_double(const Int& v) {
  return v.template convert_to<double>();
}
}  // namespace detail

/// Signed fixed-point residues modulo a large odd m: values are clamped to
/// [-8, 8], scaled by 2^16, and negatives mapped to the upper half of [0, m).
/// Works for both the SMPC field prime and the Paillier modulus.
template <typename Int>
class FixedCodec {
 public:
  explicit FixedCodec(Int modulus) : m_(std::move(modulus)) {
    if (m_ <= Int(static_cast<std::uint64_t>(4 * kScale * 8))) {
      raise(ErrorCode::InvalidParameter, "modulus too small for fixed-point range");
    }
  }

  const Int& modulus() const { return m_; }

  Int encode(double x, std::uint64_t* clip_events = nullptr) const {
    if (!std::isfinite(x)) raise(ErrorCode::InvalidParameter, "non-finite value");
    double c = std::clamp(x, -kClip, kClip);
    if (clip_events != nullptr && c != x) ++*clip_events;
    long long v = std::llround(c * static_cast<double>(kScale));
    if (v >= 0) return Int(static_cast<std::uint64_t>(v));
    return m_ - Int(static_cast<std::uint64_t>(-v));
  }

  std::vector<Int> encode_vector(const std::vector<double>& xs,
                                 std::uint64_t* clip_events = nullptr) const {
    std::vector<Int> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(encode(x, clip_events));
    return out;
  }

  /// Signed lift then downscale. `divisor` folds in a weighted-average divide
  /// (FedAvg's sum of sample counts) so callers decode sums directly.
  double decode(const Int& residue, std::uint64_t divisor = 1) const {
    if (residue >= m_) raise(ErrorCode::InvalidParameter, "residue out of range");
    if (divisor == 0) raise(ErrorCode::InvalidParameter, "zero divisor");
    double denom = static_cast<double>(kScale) * static_cast<double>(divisor);
    if (residue > m_ - residue) {  // residue > m/2: negative branch
      return -detail::to_double(Int(m_ - residue)) / denom;
    }
    return detail::to_double(residue) / denom;
  }

  std::vector<double> decode_vector(const std::vector<Int>& rs, std::uint64_t divisor = 1) const {
    std::vector<double> out;
    out.reserve(rs.size());
    for (const auto& r : rs) out.push_back(decode(r, divisor));
    return out;
  }

 private:
  Int m_;
};

}  // namespace fldabe::fp
