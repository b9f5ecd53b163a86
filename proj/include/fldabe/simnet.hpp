#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"
#include "fldabe/dp.hpp"
#include "fldabe/flcore.hpp"
#include "fldabe/protocol.hpp"

namespace fldabe::simnet {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

struct LatencyTicks {
  std::uint64_t min = 1;
  std::uint64_t max = 5;
};

enum class AdversaryKind { Replay, Modify, Mitm, Impersonate, Eavesdrop };

inline const char* adversary_kind_name(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::Replay: return "replay";
    case AdversaryKind::Modify: return "modify";
    case AdversaryKind::Mitm: return "mitm";
    case AdversaryKind::Impersonate: return "impersonate";
    case AdversaryKind::Eavesdrop: return "eavesdrop";
  }
  return "?";
}

inline AdversaryKind adversary_kind_from(const std::string& s) {
  if (s == "replay") return AdversaryKind::Replay;
  if (s == "modify") return AdversaryKind::Modify;
  if (s == "mitm") return AdversaryKind::Mitm;
  if (s == "impersonate") return AdversaryKind::Impersonate;
  if (s == "eavesdrop") return AdversaryKind::Eavesdrop;
  raise(ErrorCode::ConfigError, "unknown adversary kind '" + s + "'");
}

/// Target selector: which message on which edge of which round. Impersonate
/// reads `index` as the fog to attack; Eavesdrop is untargeted.
struct AdversaryScenario {
  AdversaryKind kind = AdversaryKind::Eavesdrop;
  std::uint32_t round = 1;
  std::string edge = "m1";  // m1..m4
  std::uint32_t index = 0;
};

struct SimConfig {
  std::uint64_t seed = 42;
  std::uint32_t rounds = 30;
  std::uint32_t n_devices = 10;
  std::uint32_t n_fogs = 2;
  std::uint32_t n_microservices = 2;
  LatencyTicks latency;
  double drop_rate = 0.0;
  std::uint32_t he_bits = 256;

  bool dp_enabled = false;
  dp::DpParams dp;

  fl::ConvergenceThresholds thresholds;

  double learning_rate = 0.5;
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 32;
  std::uint32_t feature_dim = 4;
  std::uint32_t samples_per_device = 200;
  double separation = 4.0;
  double device_shift = 0.5;
  std::uint32_t eval_samples = 2000;

  std::vector<AdversaryScenario> scenarios;

  void validate() const {
    if (rounds < 1) raise(ErrorCode::ConfigError, "rounds must be at least 1");
    if (n_devices < 1) raise(ErrorCode::ConfigError, "n_devices must be at least 1");
    if (n_fogs < 1) raise(ErrorCode::ConfigError, "n_fogs must be at least 1");
    if (n_microservices < 1) raise(ErrorCode::ConfigError, "n_microservices must be at least 1");
    if (latency.min > latency.max) raise(ErrorCode::ConfigError, "latency_ticks must be ordered");
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
      raise(ErrorCode::ConfigError, "drop_rate must lie in [0,1)");
    }
    if (he_bits != 256 && he_bits != 1024 && he_bits != 2048) {
      raise(ErrorCode::ConfigError, "he_bits must be one of 256, 1024, 2048");
    }
    if (dp_enabled) {
      try {
        dp.validate();
      } catch (const Error& e) {
        raise(ErrorCode::ConfigError, std::string("dp: ") + e.what());
      }
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      raise(ErrorCode::ConfigError, "unknown config key '" + where + it.key() + "'");
    }
  }
}

template <typename T>
T get_field(const json& obj, const std::string& where, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorCode::ConfigError, "bad value for config key '" + where + key + "'");
  }
}

}  // namespace detail

inline AdversaryScenario scenario_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) raise(ErrorCode::ConfigError, "scenario entry '" + where + "' must be an object");
  detail::reject_unknown_keys(j, where + ".", {"kind", "round", "edge", "index"});
  if (!j.contains("kind")) raise(ErrorCode::ConfigError, "scenario entry '" + where + "' lacks kind");
  AdversaryScenario s;
  s.kind = adversary_kind_from(detail::get_field<std::string>(j, where + ".", "kind", ""));
  s.round = detail::get_field<std::uint32_t>(j, where + ".", "round", 1);
  s.edge = detail::get_field<std::string>(j, where + ".", "edge", "m1");
  s.index = detail::get_field<std::uint32_t>(j, where + ".", "index", 0);
  if (s.edge != "m1" && s.edge != "m2" && s.edge != "m3" && s.edge != "m4") {
    raise(ErrorCode::ConfigError, "bad value for config key '" + where + ".edge'");
  }
  return s;
}

inline SimConfig config_from_json(const json& j) {
  if (!j.is_object()) raise(ErrorCode::ConfigError, "config root must be a JSON object");
  detail::reject_unknown_keys(
      j, "",
      {"seed", "rounds", "n_devices", "n_fogs", "n_microservices", "latency_ticks", "drop_rate",
       "he_bits", "dp", "thresholds", "training", "model", "scenarios"});
  SimConfig c;
  c.seed = detail::get_field<std::uint64_t>(j, "", "seed", c.seed);
  c.rounds = detail::get_field<std::uint32_t>(j, "", "rounds", c.rounds);
  c.n_devices = detail::get_field<std::uint32_t>(j, "", "n_devices", c.n_devices);
  c.n_fogs = detail::get_field<std::uint32_t>(j, "", "n_fogs", c.n_fogs);
  c.n_microservices = detail::get_field<std::uint32_t>(j, "", "n_microservices", c.n_microservices);
  c.drop_rate = detail::get_field<double>(j, "", "drop_rate", c.drop_rate);
  c.he_bits = detail::get_field<std::uint32_t>(j, "", "he_bits", c.he_bits);

  if (j.contains("latency_ticks")) {
    const json& lt = j.at("latency_ticks");
    if (!lt.is_array() || lt.size() != 2 || !lt[0].is_number_unsigned() ||
        !lt[1].is_number_unsigned()) {
      raise(ErrorCode::ConfigError, "bad value for config key 'latency_ticks'");
    }
    c.latency.min = lt[0].get<std::uint64_t>();
    c.latency.max = lt[1].get<std::uint64_t>();
  }
  if (j.contains("dp")) {
    const json& d = j.at("dp");
    if (d.is_null()) {
      c.dp_enabled = false;
    } else {
      if (!d.is_object()) raise(ErrorCode::ConfigError, "bad value for config key 'dp'");
      detail::reject_unknown_keys(d, "dp.", {"enabled", "epsilon", "delta", "clip_norm"});
      c.dp_enabled = detail::get_field<bool>(d, "dp.", "enabled", true);
      c.dp.epsilon = detail::get_field<double>(d, "dp.", "epsilon", c.dp.epsilon);
      c.dp.delta = detail::get_field<double>(d, "dp.", "delta", c.dp.delta);
      c.dp.clip_norm = detail::get_field<double>(d, "dp.", "clip_norm", c.dp.clip_norm);
    }
  }
  if (j.contains("thresholds")) {
    const json& t = j.at("thresholds");
    if (!t.is_object()) raise(ErrorCode::ConfigError, "bad value for config key 'thresholds'");
    detail::reject_unknown_keys(t, "thresholds.", {"target_accuracy", "min_delta", "patience"});
    c.thresholds.target_accuracy =
        detail::get_field<double>(t, "thresholds.", "target_accuracy", c.thresholds.target_accuracy);
    c.thresholds.min_delta =
        detail::get_field<double>(t, "thresholds.", "min_delta", c.thresholds.min_delta);
    c.thresholds.patience =
        detail::get_field<std::uint32_t>(t, "thresholds.", "patience", c.thresholds.patience);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    if (!t.is_object()) raise(ErrorCode::ConfigError, "bad value for config key 'training'");
    detail::reject_unknown_keys(t, "training.", {"learning_rate", "epochs", "batch_size"});
    c.learning_rate = detail::get_field<double>(t, "training.", "learning_rate", c.learning_rate);
    c.epochs = detail::get_field<std::uint32_t>(t, "training.", "epochs", c.epochs);
    c.batch_size = detail::get_field<std::uint32_t>(t, "training.", "batch_size", c.batch_size);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) raise(ErrorCode::ConfigError, "bad value for config key 'model'");
    detail::reject_unknown_keys(
        m, "model.",
        {"feature_dim", "samples_per_device", "separation", "device_shift", "eval_samples"});
    c.feature_dim = detail::get_field<std::uint32_t>(m, "model.", "feature_dim", c.feature_dim);
    c.samples_per_device =
        detail::get_field<std::uint32_t>(m, "model.", "samples_per_device", c.samples_per_device);
    c.separation = detail::get_field<double>(m, "model.", "separation", c.separation);
    c.device_shift = detail::get_field<double>(m, "model.", "device_shift", c.device_shift);
    c.eval_samples = detail::get_field<std::uint32_t>(m, "model.", "eval_samples", c.eval_samples);
  }
  if (j.contains("scenarios")) {
    const json& sc = j.at("scenarios");
    if (!sc.is_array()) raise(ErrorCode::ConfigError, "bad value for config key 'scenarios'");
    for (std::size_t i = 0; i < sc.size(); ++i) {
      c.scenarios.push_back(scenario_from_json(sc[i], "scenarios[" + std::to_string(i) + "]"));
    }
  }
  c.validate();
  return c;
}

inline SimConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

/// Canonical re-serialization of the resolved config; its hash names the run
/// directory, so two invocations with equivalent configs share a name.
inline ordered_json config_to_json(const SimConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["rounds"] = c.rounds;
  j["n_devices"] = c.n_devices;
  j["n_fogs"] = c.n_fogs;
  j["n_microservices"] = c.n_microservices;
  j["latency_ticks"] = {c.latency.min, c.latency.max};
  j["drop_rate"] = c.drop_rate;
  j["he_bits"] = c.he_bits;
  if (c.dp_enabled) {
    j["dp"] = {{"enabled", true},
               {"epsilon", c.dp.epsilon},
               {"delta", c.dp.delta},
               {"clip_norm", c.dp.clip_norm}};
  } else {
    j["dp"] = nullptr;
  }
  j["thresholds"] = {{"target_accuracy", c.thresholds.target_accuracy},
                     {"min_delta", c.thresholds.min_delta},
                     {"patience", c.thresholds.patience}};
  j["training"] = {{"learning_rate", c.learning_rate},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size}};
  j["model"] = {{"feature_dim", c.feature_dim},
                {"samples_per_device", c.samples_per_device},
                {"separation", c.separation},
                {"device_shift", c.device_shift},
                {"eval_samples", c.eval_samples}};
  ordered_json sc = ordered_json::array();
  for (const auto& s : c.scenarios) {
    sc.push_back({{"kind", adversary_kind_name(s.kind)},
                  {"round", s.round},
                  {"edge", s.edge},
                  {"index", s.index}});
  }
  j["scenarios"] = sc;
  return j;
}

inline std::string config_hash_hex(const SimConfig& c) {
  Hash32 h = sha256(config_to_json(c).dump());
  std::array<std::uint8_t, 8> first8{};
  std::copy_n(h.begin(), 8, first8.begin());
  return to_hex(first8);
}

inline std::string run_dir_name(const SimConfig& c) {
  return config_hash_hex(c).substr(0, 8) + "-s" + std::to_string(c.seed);
}

inline protocol::DeploymentConfig to_deployment_config(const SimConfig& c) {
  protocol::DeploymentConfig d;
  d.seed = c.seed;
  d.n_devices = c.n_devices;
  d.n_fogs = c.n_fogs;
  d.n_microservices = c.n_microservices;
  d.he_bits = c.he_bits;
  d.learning_rate = c.learning_rate;
  d.epochs = c.epochs;
  d.batch_size = c.batch_size;
  d.samples_per_device = c.samples_per_device;
  d.feature_dim = c.feature_dim;
  d.separation = c.separation;
  d.device_shift = c.device_shift;
  d.eval_samples = c.eval_samples;
  d.thresholds = c.thresholds;
  d.dp_sigma = 0.0;
  if (c.dp_enabled) d.dp_sigma = dp::calibrate_sigma(c.dp).sigma;
  return d;
}

// ---------------------------------------------------------------------------
// Event-driven transport with latency, loss and adversarial interception.

class EventTransport : public protocol::Transport {
 public:
  struct SendInfo {
    std::uint32_t round = 0;
    protocol::MsgKind kind = protocol::MsgKind::AuthRequest;
    std::uint32_t index = 0;  // per (round, kind) send counter
  };

  EventTransport(LatencyTicks latency, double drop_rate, SeededRng net_rng)
      : latency_(latency), drop_rate_(drop_rate), lat_rng_(net_rng.fork("latency")),
        drop_rng_(net_rng.fork("drop")) {}

  /// May mutate the frame in flight or drop it by returning nullopt.
  void set_interceptor(
      std::function<std::optional<protocol::WireFrame>(const protocol::WireFrame&, const SendInfo&)>
          f) {
    interceptor_ = std::move(f);
  }
  /// Called after honest delivery; used by the replay adversary.
  void set_observer(std::function<void(const protocol::WireFrame&, const SendInfo&)> f) {
    observer_ = std::move(f);
  }

  void send(protocol::WireFrame f) override {
    SendInfo info;
    info.round = f.round;
    info.kind = f.kind;
    info.index = edge_counter_[{f.round, f.kind}]++;

    std::uint64_t span = latency_.max - latency_.min;
    std::uint64_t latency = latency_.min + (span > 0 ? lat_rng_.below(span + 1) : 0);
    std::uint64_t arrival = now_ + 1 + latency;

    wire_log_.push_back(f.wire_bytes());
    wire_bytes_total_ += wire_log_.back().size();

    if (drop_rate_ > 0.0 && drop_rng_.uniform() < drop_rate_) return;

    std::optional<protocol::WireFrame> out = std::move(f);
    if (interceptor_) out = interceptor_(*out, info);
    if (!out) return;
    queue_.push(Ev{arrival, seq_++, std::move(*out), info});
  }

  void pump() override {
    while (!queue_.empty()) {
      Ev ev = queue_.top();
      queue_.pop();
      if (ev.time > now_) now_ = ev.time;
      sink_(ev.frame);
      if (observer_) observer_(ev.frame, ev.info);
    }
  }

  std::uint64_t now() const override { return now_; }
  const std::vector<Bytes>& wire_log() const { return wire_log_; }
  std::uint64_t wire_bytes_total() const { return wire_bytes_total_; }

 private:
  struct Ev {
    std::uint64_t time;
    std::uint64_t seq;
    protocol::WireFrame frame;
    SendInfo info;
    bool operator>(const Ev& o) const {
      return time != o.time ? time > o.time : seq > o.seq;
    }
  };

  LatencyTicks latency_;
  double drop_rate_;
  SeededRng lat_rng_;
  SeededRng drop_rng_;
  std::priority_queue<Ev, std::vector<Ev>, std::greater<Ev>> queue_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::map<std::pair<std::uint32_t, protocol::MsgKind>, std::uint32_t> edge_counter_;
  std::vector<Bytes> wire_log_;
  std::uint64_t wire_bytes_total_ = 0;
  std::function<std::optional<protocol::WireFrame>(const protocol::WireFrame&, const SendInfo&)>
      interceptor_;
  std::function<void(const protocol::WireFrame&, const SendInfo&)> observer_;
};

// ---------------------------------------------------------------------------
// Metrics

struct RoundRow {
  std::uint32_t round = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::uint32_t messages = 0;
  std::uint64_t bytes = 0;
  std::uint32_t txs = 0;
};

struct AttackOutcome {
  AdversaryKind kind = AdversaryKind::Eavesdrop;
  std::uint32_t attempted = 0;
  std::uint32_t detected = 0;
  std::uint32_t succeeded = 0;
  std::uint64_t leak_matches = 0;  // eavesdrop only
};

struct Metrics {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::uint32_t rounds_requested = 0;
  std::uint32_t rounds_completed = 0;  // rows written, incl. a stalled partial round
  bool converged = false;
  std::uint32_t converged_round = 0;
  std::optional<protocol::StallInfo> stall;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  bool dp_enabled = false;
  dp::DpParams dp_params;
  double dp_sigma = 0.0;
  bool dp_epsilon_warning = false;
  double dp_epsilon_spent = 0.0;
  std::vector<RoundRow> rounds;
  std::vector<AttackOutcome> attacks;
  std::uint64_t ledger_blocks = 0;
  std::uint64_t ledger_transactions = 0;
  std::uint64_t ledger_core_transactions = 0;
  std::uint64_t ledger_key_events = 0;
  std::uint64_t clip_events = 0;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline ordered_json metrics_to_json(const Metrics& m) {
  ordered_json j;
  j["format"] = "fldabe-metrics-v1";
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["rounds_requested"] = m.rounds_requested;
  j["rounds_completed"] = m.rounds_completed;
  j["converged"] = m.converged;
  j["converged_round"] = m.converged_round;
  if (m.stall) {
    j["stall"] = {{"round", m.stall->round},
                  {"phase", protocol::phase_name(m.stall->phase)},
                  {"missing", m.stall->missing}};
  } else {
    j["stall"] = nullptr;
  }
  j["final_loss"] = m.final_loss;
  j["final_accuracy"] = m.final_accuracy;
  ordered_json dp;
  dp["enabled"] = m.dp_enabled;
  if (m.dp_enabled) {
    dp["epsilon"] = m.dp_params.epsilon;
    dp["delta"] = m.dp_params.delta;
    dp["clip_norm"] = m.dp_params.clip_norm;
    dp["epsilon_warning"] = m.dp_epsilon_warning;
  }
  dp["sigma"] = m.dp_sigma;
  dp["epsilon_spent"] = m.dp_epsilon_spent;
  j["dp"] = dp;
  ordered_json rounds = ordered_json::array();
  for (const auto& r : m.rounds) {
    rounds.push_back({{"round", r.round},
                      {"loss", r.loss},
                      {"accuracy", r.accuracy},
                      {"messages", r.messages},
                      {"bytes", r.bytes},
                      {"txs", r.txs}});
  }
  j["rounds"] = rounds;
  ordered_json attacks = ordered_json::array();
  for (const auto& a : m.attacks) {
    ordered_json aj;
    aj["kind"] = adversary_kind_name(a.kind);
    aj["attempted"] = a.attempted;
    aj["detected"] = a.detected;
    aj["succeeded"] = a.succeeded;
    if (a.kind == AdversaryKind::Eavesdrop) aj["leak_matches"] = a.leak_matches;
    attacks.push_back(aj);
  }
  j["attacks"] = attacks;
  j["ledger"] = {{"blocks", m.ledger_blocks},
                 {"transactions", m.ledger_transactions},
                 {"core_transactions", m.ledger_core_transactions},
                 {"key_events", m.ledger_key_events}};
  j["clip_events"] = m.clip_events;
  return j;
}

inline std::string rounds_csv_text(const std::vector<RoundRow>& rows) {
  std::string out = "round,loss,accuracy,messages,bytes,txs\n";
  for (const auto& r : rows) {
    out += std::to_string(r.round) + "," + format_double(r.loss) + "," +
           format_double(r.accuracy) + "," + std::to_string(r.messages) + "," +
           std::to_string(r.bytes) + "," + std::to_string(r.txs) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plaintext FedAvg baseline: the same data, seeds and schedule with no
// crypto in the path. Serves as the oracle the pipeline is compared against.

struct BaselineResult {
  std::vector<fl::RoundRecord> rounds;
  bool converged = false;
  std::uint32_t converged_round = 0;
};

inline BaselineResult run_plaintext_baseline(const SimConfig& cfg) {
  protocol::DeploymentConfig dc = to_deployment_config(cfg);
  Key32 root = protocol::DataPlan::root_key(dc.seed);

  std::vector<fl::Dataset> data;
  std::vector<fl::ModelWeights> local;
  for (std::uint32_t i = 0; i < dc.n_devices; ++i) {
    data.push_back(protocol::DataPlan::device_dataset(root, dc, i));
    local.emplace_back(dc.model_dim(), 0.0);
  }
  fl::Dataset eval = protocol::DataPlan::eval_dataset(root, dc);

  fl::GlobalModel global;
  global.weights.assign(dc.model_dim(), 0.0);
  BaselineResult out;
  for (std::uint32_t r = 1; r <= cfg.rounds; ++r) {
    std::vector<std::pair<fl::ModelWeights, std::uint64_t>> updates;
    for (std::uint32_t i = 0; i < dc.n_devices; ++i) {
      fl::TrainingConfig tc;
      tc.learning_rate = dc.learning_rate;
      tc.epochs = dc.epochs;
      tc.batch_size = dc.batch_size;
      tc.seed = protocol::DataPlan::train_seed(root, i, r);
      updates.emplace_back(fl::local_train(local[i], data[i], tc), data[i].size());
    }
    global.weights = fl::fedavg_plain(updates);
    global.round = r;
    for (auto& w : local) w = global.weights;
    fl::EvalResult ev = fl::evaluate(global.weights, eval);
    global.history.push_back({r, ev.loss, ev.accuracy});
    out.rounds.push_back(global.history.back());
    if (!out.converged && fl::has_converged(global, dc.thresholds)) {
      out.converged = true;
      out.converged_round = r;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation driver

class Simulation {
 public:
  explicit Simulation(SimConfig cfg)
      : cfg_(std::move(cfg)),
        net_rng_(SeededRng(seed_from_u64(cfg_.seed)).fork("network")),
        transport_(cfg_.latency, cfg_.drop_rate, net_rng_),
        deployment_(to_deployment_config(cfg_), transport_) {
    validate_scenarios();
    install_adversaries();
  }

  const SimConfig& config() const { return cfg_; }
  protocol::Deployment& deployment() { return deployment_; }
  const protocol::Deployment& deployment() const { return deployment_; }
  EventTransport& transport() { return transport_; }
  const Metrics& metrics() const { return metrics_; }

  /// Runs every configured round (or stops at a stall) and assembles metrics.
  void run() {
    bool stalled = false;
    for (std::uint32_t r = 1; r <= cfg_.rounds && !stalled; ++r) {
      protocol::RoundStatus st = deployment_.run_round(r);
      append_row(r);
      if (st == protocol::RoundStatus::Stalled) stalled = true;
    }
    finalize_attacks();
    assemble_metrics();
  }

  /// Writes metrics.json, rounds.csv and ledger.jsonl under
  /// out_root/<config-hash8>-s<seed>/ and returns that directory.
  std::filesystem::path write_outputs(const std::filesystem::path& out_root) const {
    std::filesystem::path dir = out_root / run_dir_name(cfg_);
    std::filesystem::create_directories(dir);
    write_file(dir / "metrics.json", metrics_to_json(metrics_).dump(2) + "\n");
    write_file(dir / "rounds.csv", rounds_csv_text(metrics_.rounds));
    write_file(dir / "ledger.jsonl", deployment_.chain().export_jsonl());
    return dir;
  }

 private:
  SimConfig cfg_;
  SeededRng net_rng_;
  EventTransport transport_;
  protocol::Deployment deployment_;
  Metrics metrics_;
  std::vector<RoundRow> rows_;
  std::vector<AttackOutcome> outcomes_;
  std::map<std::size_t, protocol::WireFrame> captured_frames_;  // scenario index -> frame

  void validate_scenarios() {
    outcomes_.resize(cfg_.scenarios.size());
    for (std::size_t si = 0; si < cfg_.scenarios.size(); ++si) {
      const AdversaryScenario& s = cfg_.scenarios[si];
      outcomes_[si].kind = s.kind;
      if (s.kind == AdversaryKind::Eavesdrop) continue;
      if (s.round < 1 || s.round > cfg_.rounds) {
        raise(ErrorCode::UnresolvableTarget,
              "scenario round " + std::to_string(s.round) + " outside 1.." +
                  std::to_string(cfg_.rounds));
      }
      if (s.edge != "m1" && s.edge != "m2" && s.edge != "m3" && s.edge != "m4") {
        raise(ErrorCode::ConfigError, "bad value for config key 'scenarios[].edge'");
      }
      if (s.kind == AdversaryKind::Impersonate) {
        if (s.index >= cfg_.n_fogs) {
          raise(ErrorCode::UnresolvableTarget,
                "impersonation targets fog " + std::to_string(s.index) + " but only " +
                    std::to_string(cfg_.n_fogs) + " exist");
        }
        continue;
      }
      std::uint32_t limit = s.edge == "m1"   ? cfg_.n_devices
                            : s.edge == "m2" ? cfg_.n_fogs
                            : s.edge == "m3" ? cfg_.n_microservices
                                             : 1;
      if (s.index >= limit) {
        raise(ErrorCode::UnresolvableTarget, "scenario index " + std::to_string(s.index) +
                                                 " exceeds " + s.edge + " message count " +
                                                 std::to_string(limit));
      }
    }
  }

  static std::optional<protocol::MsgKind> core_kind(const std::string& edge) {
    if (edge == "m1") return protocol::MsgKind::M1;
    if (edge == "m2") return protocol::MsgKind::M2;
    if (edge == "m3") return protocol::MsgKind::M3;
    if (edge == "m4") return protocol::MsgKind::M4;
    return std::nullopt;
  }

  bool matches(const AdversaryScenario& s, const EventTransport::SendInfo& info) const {
    auto k = core_kind(s.edge);
    return k && info.kind == *k && info.round == s.round && info.index == s.index;
  }

  void install_adversaries() {
    bool want_intercept = false;
    bool want_observe = false;
    bool want_impersonate = false;
    for (const auto& s : cfg_.scenarios) {
      if (s.kind == AdversaryKind::Modify || s.kind == AdversaryKind::Mitm) want_intercept = true;
      if (s.kind == AdversaryKind::Replay) want_observe = true;
      if (s.kind == AdversaryKind::Impersonate) want_impersonate = true;
    }

    if (want_intercept) {
      transport_.set_interceptor(
          [this](const protocol::WireFrame& f,
                 const EventTransport::SendInfo& info) -> std::optional<protocol::WireFrame> {
            protocol::WireFrame out = f;
            for (std::size_t si = 0; si < cfg_.scenarios.size(); ++si) {
              const AdversaryScenario& s = cfg_.scenarios[si];
              if (!matches(s, info)) continue;
              if (s.kind == AdversaryKind::Modify) {
                ++outcomes_[si].attempted;
                if (!out.body.empty()) out.body.back() ^= 0x01;
              } else if (s.kind == AdversaryKind::Mitm) {
                ++outcomes_[si].attempted;
                // Substitute attacker-encrypted content: same header, body
                // sealed under a key the attacker invented.
                SeededRng attacker = net_rng_.fork("mitm", static_cast<std::uint32_t>(si));
                Key32 attacker_key = attacker.array<32>();
                ByteWriter fake;
                fake.str("attacker-payload");
                fake.raw(attacker.bytes(64));
                if (out.aead_nonce.empty()) {
                  out.body = fake.take();  // unenveloped broadcast: raw substitution
                } else {
                  out.body = aead_seal(attacker_key, out.aead_nonce, fake.take(), out.header_ad());
                }
              }
            }
            return out;
          });
    }

    if (want_observe) {
      transport_.set_observer([this](const protocol::WireFrame& f,
                                     const EventTransport::SendInfo& info) {
        for (std::size_t si = 0; si < cfg_.scenarios.size(); ++si) {
          const AdversaryScenario& s = cfg_.scenarios[si];
          if (s.kind != AdversaryKind::Replay || !matches(s, info)) continue;
          ++outcomes_[si].attempted;
          const ledger::Transaction* tx = deployment_.find_tx(f.sender, f.nonce);
          bool tx_rejected = false;
          if (tx != nullptr) {
            tx_rejected = deployment_.resubmit(*tx) != ledger::SubmitStatus::Accepted;
          }
          std::size_t before = deployment_.detections().size();
          deployment_.redeliver(f);
          bool frame_dropped = false;
          for (std::size_t k = before; k < deployment_.detections().size(); ++k) {
            if (deployment_.detections()[k].kind == "replayed_frame") frame_dropped = true;
          }
          if (tx_rejected && frame_dropped) ++outcomes_[si].detected;
          if (!tx_rejected || !frame_dropped) ++outcomes_[si].succeeded;
        }
      });
    }

    if (want_impersonate) {
      deployment_.set_pre_phase_hook([this](std::uint32_t round, protocol::Phase phase) {
        if (phase != protocol::Phase::Upload) return;
        for (std::size_t si = 0; si < cfg_.scenarios.size(); ++si) {
          const AdversaryScenario& s = cfg_.scenarios[si];
          if (s.kind != AdversaryKind::Impersonate || s.round != round) continue;
          ++outcomes_[si].attempted;
          std::string rogue = "x" + std::to_string(si);
          std::size_t before = deployment_.detections().size();
          bool session = deployment_.attempt_rogue_auth(rogue, s.index, round);
          deployment_.attempt_rogue_m1(rogue, s.index, round);
          bool auth_refused = false;
          bool m1_refused = false;
          for (std::size_t k = before; k < deployment_.detections().size(); ++k) {
            const auto& d = deployment_.detections()[k];
            if (d.kind == "auth_failed" && d.detail.find(rogue) != std::string::npos) {
              auth_refused = true;
            }
            if (d.kind == "aead_failure" && d.detail.find(rogue) != std::string::npos) {
              m1_refused = true;
            }
          }
          if (session) {
            ++outcomes_[si].succeeded;
          } else if (auth_refused && m1_refused) {
            ++outcomes_[si].detected;
          }
        }
      });
    }
  }

  void append_row(std::uint32_t r) {
    RoundRow row;
    row.round = r;
    const auto& hist = deployment_.global().history;
    if (!hist.empty()) {
      row.loss = hist.back().loss;
      row.accuracy = hist.back().accuracy;
    } else {
      fl::EvalResult ev = fl::evaluate(deployment_.global().weights, deployment_.eval_data());
      row.loss = ev.loss;
      row.accuracy = ev.accuracy;
    }
    auto it = deployment_.tallies().find(r);
    if (it != deployment_.tallies().end()) {
      row.messages = it->second.core_messages;
      row.bytes = it->second.bytes;
      row.txs = it->second.txs_sealed;
    }
    rows_.push_back(row);
  }

  void finalize_attacks() {
    for (std::size_t si = 0; si < cfg_.scenarios.size(); ++si) {
      const AdversaryScenario& s = cfg_.scenarios[si];
      AttackOutcome& o = outcomes_[si];
      switch (s.kind) {
        case AdversaryKind::Eavesdrop: {
          o.attempted = 1;
          o.detected = 0;
          o.leak_matches = leak_scan();
          o.succeeded = o.leak_matches > 0 ? 1 : 0;
          break;
        }
        case AdversaryKind::Modify:
        case AdversaryKind::Mitm: {
          // Detection: the receiver logged a cryptographic rejection on the
          // target edge in the target round.
          std::uint32_t hits = 0;
          for (const auto& d : deployment_.detections()) {
            if (d.round != s.round) continue;
            if (d.kind != "aead_failure" && d.kind != "dabe_failure" &&
                d.kind != "payload_hash_mismatch") {
              continue;
            }
            bool edge_match = s.edge == "m4" ? d.detail.find("m4") != std::string::npos
                                             : d.detail.find(s.edge + " ") == 0 ||
                                                   d.detail.find(s.edge + ":") == 0;
            if (edge_match) ++hits;
          }
          o.detected = std::min(o.attempted, hits);
          break;
        }
        case AdversaryKind::Replay:
        case AdversaryKind::Impersonate:
          break;  // counted inline
      }
    }
  }

  /// Scans every transmitted wire frame for any device's pre-encryption
  /// payload bytes; a hit would mean plaintext crossed the network.
  std::uint64_t leak_scan() const {
    std::uint64_t hits = 0;
    for (const Bytes& plain : deployment_.device_plaintexts()) {
      if (plain.empty()) continue;
      for (const Bytes& wire : transport_.wire_log()) {
        auto it = std::search(wire.begin(), wire.end(), plain.begin(), plain.end());
        if (it != wire.end()) ++hits;
      }
    }
    return hits;
  }

  void assemble_metrics() {
    metrics_.config_hash = config_hash_hex(cfg_);
    metrics_.seed = cfg_.seed;
    metrics_.rounds_requested = cfg_.rounds;
    metrics_.rounds_completed = static_cast<std::uint32_t>(rows_.size());
    metrics_.converged = deployment_.converged();
    metrics_.converged_round = deployment_.converged_round();
    metrics_.stall = deployment_.stall();
    if (!rows_.empty()) {
      metrics_.final_loss = rows_.back().loss;
      metrics_.final_accuracy = rows_.back().accuracy;
    }
    metrics_.dp_enabled = cfg_.dp_enabled;
    if (cfg_.dp_enabled) {
      metrics_.dp_params = cfg_.dp;
      dp::Calibration cal = dp::calibrate_sigma(cfg_.dp);
      metrics_.dp_sigma = cal.sigma;
      metrics_.dp_epsilon_warning = cal.epsilon_warning;
      metrics_.dp_epsilon_spent = dp::epsilon_spent(
          cfg_.dp, static_cast<std::uint32_t>(deployment_.global().history.size()));
    }
    metrics_.rounds = rows_;
    metrics_.attacks = outcomes_;
    const ledger::Ledger& led = deployment_.chain();
    metrics_.ledger_blocks = led.chain().size();
    for (const auto& block : led.chain()) {
      for (const auto& tx : block.txs) {
        ++metrics_.ledger_transactions;
        if (tx.kind == ledger::TxKind::KeyEvent) {
          ++metrics_.ledger_key_events;
        } else {
          ++metrics_.ledger_core_transactions;
        }
      }
    }
    metrics_.clip_events = deployment_.clip_events();
  }

  static void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) raise(ErrorCode::IoError, "cannot write " + p.string());
    out << content;
  }
};

}  // namespace fldabe::simnet
