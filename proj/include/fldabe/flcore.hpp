#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"
#include "fldabe/fixedpoint.hpp"
#include "fldabe/he.hpp"

namespace fldabe::fl {

/// Logistic-regression parameters: d feature weights followed by the bias.
using ModelWeights = std::vector<double>;

struct Dataset {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;  // 0 or 1

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features[0].size(); }

  void validate() const {
    if (features.size() != labels.size()) {
      raise(ErrorCode::DimensionMismatch, "feature/label count mismatch");
    }
    if (features.empty()) raise(ErrorCode::InvalidParameter, "empty dataset");
    for (const auto& row : features) {
      if (row.size() != features[0].size()) {
        raise(ErrorCode::DimensionMismatch, "ragged feature matrix");
      }
    }
    for (int y : labels) {
      if (y != 0 && y != 1) raise(ErrorCode::InvalidParameter, "labels must be 0/1");
    }
  }
};

struct TrainingConfig {
  double learning_rate = 0.1;
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct RoundRecord {
  std::uint32_t round = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct GlobalModel {
  ModelWeights weights;
  std::uint32_t round = 0;
  std::vector<RoundRecord> history;
};

struct ConvergenceThresholds {
  double target_accuracy = 0.95;
  double min_delta = 1e-4;
  std::uint32_t patience = 3;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double raw_score(const ModelWeights& w, const std::vector<double>& x) {
  if (w.size() != x.size() + 1) raise(ErrorCode::DimensionMismatch, "model/feature dimension mismatch");
  double z = w.back();
  for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
  return z;
}

/// Mean logistic-loss gradient over the given sample indices (all samples if
/// empty is not allowed). Exposed for the finite-difference cross-check.
inline ModelWeights mean_gradient(const ModelWeights& w, const Dataset& data,
                                  const std::vector<std::size_t>& idx) {
  if (idx.empty()) raise(ErrorCode::InvalidParameter, "empty batch");
  ModelWeights g(w.size(), 0.0);
  for (std::size_t k : idx) {
    double p = sigmoid(raw_score(w, data.features[k]));
    double err = p - static_cast<double>(data.labels[k]);
    for (std::size_t i = 0; i + 1 < w.size(); ++i) g[i] += err * data.features[k][i];
    g.back() += err;
  }
  double inv = 1.0 / static_cast<double>(idx.size());
  for (double& v : g) v *= inv;
  return g;
}

inline double mean_loss(const ModelWeights& w, const Dataset& data,
                        const std::vector<std::size_t>& idx) {
  if (idx.empty()) raise(ErrorCode::InvalidParameter, "empty batch");
  double total = 0.0;
  for (std::size_t k : idx) {
    double p = sigmoid(raw_score(w, data.features[k]));
    p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    total += data.labels[k] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(idx.size());
}

inline ModelWeights local_train(ModelWeights w, const Dataset& data, const TrainingConfig& cfg) {
  data.validate();
  if (w.size() != data.dim() + 1) raise(ErrorCode::DimensionMismatch, "model/dataset dimension mismatch");
  if (!(cfg.learning_rate > 0)) raise(ErrorCode::InvalidParameter, "learning_rate must be positive");
  if (cfg.batch_size < 1) raise(ErrorCode::InvalidParameter, "batch_size must be at least 1");

  SeededRng rng(seed_from_u64(cfg.seed));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng shuffle_rng = rng.fork("shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = shuffle_rng.below(i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      ModelWeights g = mean_gradient(w, data, batch);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * g[i];
    }
  }
  return w;
}

inline EvalResult evaluate(const ModelWeights& w, const Dataset& data) {
  data.validate();
  if (w.size() != data.dim() + 1) raise(ErrorCode::DimensionMismatch, "model/dataset dimension mismatch");
  EvalResult r;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    double p = sigmoid(raw_score(w, data.features[k]));
    int predicted = p >= 0.5 ? 1 : 0;
    if (predicted == data.labels[k]) ++correct;
    double pc = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    r.loss += data.labels[k] == 1 ? -std::log(pc) : -std::log(1.0 - pc);
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

// ---------------------------------------------------------------------------
// Federated averaging.

inline ModelWeights fedavg_plain(const std::vector<std::pair<ModelWeights, std::uint64_t>>& updates) {
  if (updates.empty()) raise(ErrorCode::EmptyAggregation, "no client updates");
  const std::size_t d = updates[0].first.size();
  std::uint64_t total = 0;
  ModelWeights acc(d, 0.0);
  for (const auto& [w, n_k] : updates) {
    if (w.size() != d) raise(ErrorCode::DimensionMismatch, "client weight dimensions differ");
    for (std::size_t i = 0; i < d; ++i) acc[i] += static_cast<double>(n_k) * w[i];
    total += n_k;
  }
  if (total == 0) raise(ErrorCode::EmptyAggregation, "zero total sample count");
  for (double& v : acc) v /= static_cast<double>(total);
  return acc;
}

struct EncryptedUpdate {
  std::vector<he::Ciphertext> cts;
  std::uint64_t n_k = 0;
};

struct EncryptedAggregate {
  std::vector<he::Ciphertext> cts;  // coordinate-wise sum of n_k-scaled updates
  std::uint64_t divisor = 0;        // sum of n_k; divide after decryption
};

inline EncryptedAggregate fedavg_encrypted(const he::PublicKey& pk,
                                           const std::vector<EncryptedUpdate>& updates) {
  if (updates.empty()) raise(ErrorCode::EmptyAggregation, "no client updates");
  const std::size_t d = updates[0].cts.size();
  if (d == 0) raise(ErrorCode::EmptyAggregation, "zero-length ciphertext vector");
  EncryptedAggregate out;
  out.cts.reserve(d);
  for (const auto& u : updates) {
    if (u.cts.size() != d) raise(ErrorCode::DimensionMismatch, "ciphertext vector lengths differ");
  }
  for (std::size_t i = 0; i < d; ++i) {
    he::Ciphertext acc = he::scale(pk, updates[0].cts[i], he::BigInt(updates[0].n_k));
    for (std::size_t k = 1; k < updates.size(); ++k) {
      acc = he::add(pk, acc, he::scale(pk, updates[k].cts[i], he::BigInt(updates[k].n_k)));
    }
    out.cts.push_back(std::move(acc));
  }
  for (const auto& u : updates) out.divisor += u.n_k;
  if (out.divisor == 0) raise(ErrorCode::EmptyAggregation, "zero total sample count");
  return out;
}

inline bool has_converged(const GlobalModel& m, const ConvergenceThresholds& t) {
  if (m.history.empty()) return false;
  if (m.history.back().accuracy >= t.target_accuracy) return true;
  if (t.patience == 0 || !(t.min_delta > 0)) return false;
  if (m.history.size() < static_cast<std::size_t>(t.patience) + 1) return false;
  for (std::size_t i = m.history.size() - t.patience; i < m.history.size(); ++i) {
    double improvement = m.history[i - 1].loss - m.history[i].loss;
    if (improvement >= t.min_delta) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Synthetic two-blob data. Class centers sit at ±separation/2 along the
// all-ones diagonal; a per-device shift of both centers makes devices non-IID
// without changing the separating direction.

inline std::vector<double> random_unit_shift(std::size_t dim, double magnitude, SeededRng& rng) {
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  double norm = std::sqrt(sq);
  if (norm == 0.0) return std::vector<double>(dim, 0.0);
  for (double& x : v) x = x / norm * magnitude;
  return v;
}

inline Dataset synthetic_blobs(std::size_t n, std::size_t dim, double separation,
                               const std::vector<double>& shift, SeededRng& rng) {
  if (n == 0 || dim == 0) raise(ErrorCode::InvalidParameter, "empty dataset requested");
  if (!shift.empty() && shift.size() != dim) {
    raise(ErrorCode::DimensionMismatch, "shift dimension mismatch");
  }
  const double half = separation / (2.0 * std::sqrt(static_cast<double>(dim)));
  Dataset d;
  d.features.reserve(n);
  d.labels.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    int y = static_cast<int>(rng.below(2));
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      double center = (y == 1 ? half : -half) + (shift.empty() ? 0.0 : shift[i]);
      x[i] = center + rng.normal();
    }
    d.features.push_back(std::move(x));
    d.labels.push_back(y);
  }
  return d;
}

// ---------------------------------------------------------------------------
// CSV import/export: header f1..fd,label.

inline void save_csv(std::ostream& os, const Dataset& data) {
  data.validate();
  for (std::size_t i = 1; i <= data.dim(); ++i) os << 'f' << i << ',';
  os << "label\n";
  char buf[64];
  for (std::size_t k = 0; k < data.size(); ++k) {
    for (double v : data.features[k]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf << ',';
    }
    os << data.labels[k] << '\n';
  }
}

inline Dataset load_csv(std::istream& is) {
  Dataset d;
  std::string line;
  if (!std::getline(is, line)) raise(ErrorCode::ParseError, "empty csv");
  std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2 || line.substr(line.rfind(',') + 1) != "label") {
    raise(ErrorCode::ParseError, "csv header must end in 'label'");
  }
  std::size_t dim = cols - 1;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != dim + 1) {
      raise(ErrorCode::ParseError, "csv row " + std::to_string(line_no) + " has wrong arity");
    }
    double label = row.back();
    row.pop_back();
    if (label != 0.0 && label != 1.0) {
      raise(ErrorCode::ParseError, "csv row " + std::to_string(line_no) + " label must be 0/1");
    }
    d.features.push_back(std::move(row));
    d.labels.push_back(static_cast<int>(label));
  }
  d.validate();
  return d;
}

}  // namespace fldabe::fl
