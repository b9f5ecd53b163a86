#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"

namespace fldabe::dp {

struct DpParams {
  double epsilon = 8.0;
  double delta = 1e-5;
  double clip_norm = 0.1;
  std::uint32_t rounds_budgeted = 30;

  void validate() const {
    if (!(epsilon > 0)) raise(ErrorCode::InvalidParameter, "epsilon must be positive");
    if (!(delta > 0 && delta < 1)) raise(ErrorCode::InvalidParameter, "delta must lie in (0,1)");
    if (!(clip_norm > 0)) raise(ErrorCode::InvalidParameter, "clip_norm must be positive");
  }
};

struct Calibration {
  double sigma = 0.0;
  // The closed form is only tight for epsilon <= 1; larger budgets still get a
  // sigma but carry this flag so reports can say so.
  bool epsilon_warning = false;
};

/// Gaussian mechanism: sigma = C * sqrt(2 ln(1.25/delta)) / epsilon.
inline Calibration calibrate_sigma(const DpParams& p) {
  p.validate();
  Calibration c;
  c.sigma = p.clip_norm * std::sqrt(2.0 * std::log(1.25 / p.delta)) / p.epsilon;
  c.epsilon_warning = p.epsilon > 1.0;
  return c;
}

/// Scale w down to L2 norm C if it exceeds it; direction preserved.
inline std::vector<double> clip_to_norm(const std::vector<double>& w, double c) {
  if (!(c > 0)) raise(ErrorCode::InvalidParameter, "clip norm must be positive");
  double sq = 0.0;
  for (double x : w) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm <= c) return w;
  double f = c / norm;
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] * f;
  return out;
}

/// Adds i.i.d. Normal(0, sigma^2) per coordinate. sigma == 0 returns w without
/// touching the rng, so the noiseless path is bit-identical to no DP at all.
inline std::vector<double> gaussian_perturb(const std::vector<double>& w, double sigma,
                                            SeededRng& rng) {
  if (sigma < 0) raise(ErrorCode::InvalidParameter, "sigma must be non-negative");
  if (sigma == 0.0) return w;
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] + sigma * rng.normal();
  return out;
}

/// Basic composition across rounds.
inline double epsilon_spent(const DpParams& p, std::uint32_t rounds_run) {
  return p.epsilon * static_cast<double>(rounds_run);
}

}  // namespace fldabe::dp
