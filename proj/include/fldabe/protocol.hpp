#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"
#include "fldabe/dabe.hpp"
#include "fldabe/dp.hpp"
#include "fldabe/fixedpoint.hpp"
#include "fldabe/flcore.hpp"
#include "fldabe/he.hpp"
#include "fldabe/ledger.hpp"
#include "fldabe/smpc.hpp"

namespace fldabe::protocol {

using Field = smpc::Mersenne127;
using Residue = Field::value_type;

inline he::BigInt bigint_from_residue(Residue v) {
  he::BigInt hi(static_cast<std::uint64_t>(v >> 64));
  return (hi << 64) | he::BigInt(static_cast<std::uint64_t>(v));
}

inline Residue residue_from_bigint(const he::BigInt& x) {
  he::BigInt mask64 = (he::BigInt(1) << 64) - 1;
  std::uint64_t lo = he::BigInt(x & mask64).convert_to<std::uint64_t>();
  std::uint64_t hi = he::BigInt((x >> 64) & mask64).convert_to<std::uint64_t>();
  return (static_cast<Residue>(hi) << 64) | lo;
}

inline he::BigInt field_prime_bigint() { return (he::BigInt(1) << 127) - 1; }

// ---------------------------------------------------------------------------
// Wire frames. Auth legs travel in the clear (their payload is a DABE
// ciphertext or a PRF tag); everything else is sealed under the session key
// negotiated by the round's challenge-response. The 16-byte frame nonce
// doubles as the ledger transaction nonce, binding frame to log entry.

enum class MsgKind : std::uint8_t {
  AuthRequest = 0,
  AuthChallenge = 1,
  AuthResponse = 2,
  M1 = 3,
  M2 = 4,
  M3 = 5,
  M4 = 6,
};

inline const char* msg_kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::AuthRequest: return "auth_request";
    case MsgKind::AuthChallenge: return "auth_challenge";
    case MsgKind::AuthResponse: return "auth_response";
    case MsgKind::M1: return "m1";
    case MsgKind::M2: return "m2";
    case MsgKind::M3: return "m3";
    case MsgKind::M4: return "m4";
  }
  return "?";
}

struct WireFrame {
  std::string sender;
  std::string receiver;  // node id, or "population" for the global broadcast
  std::uint32_t round = 0;
  MsgKind kind = MsgKind::AuthRequest;
  ledger::Nonce16 nonce{};
  Bytes aead_nonce;  // empty for unenveloped kinds
  Bytes body;        // sealed envelope, or plaintext body for auth/M4 frames

  Bytes header_ad() const {
    ByteWriter w;
    w.str("frame");
    w.str(sender);
    w.str(receiver);
    w.u32(round);
    w.u8(static_cast<std::uint8_t>(kind));
    w.raw(nonce);
    return w.take();
  }

  Bytes wire_bytes() const {
    ByteWriter w;
    w.raw(header_ad());
    w.blob(aead_nonce);
    w.blob(body);
    return w.take();
  }
};

/// Delivery fabric. The protocol hands frames to the transport and pumps it at
/// phase barriers; the simulator's transport adds latency, loss and
/// adversaries on top.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(WireFrame f) = 0;
  virtual void pump() = 0;
  virtual std::uint64_t now() const = 0;
  void set_sink(std::function<void(const WireFrame&)> sink) { sink_ = std::move(sink); }

 protected:
  std::function<void(const WireFrame&)> sink_;
};

/// FIFO transport with unit latency; enough for protocol-level tests.
class ImmediateTransport : public Transport {
 public:
  void send(WireFrame f) override {
    queue_.push_back(std::move(f));
  }
  void pump() override {
    while (!queue_.empty()) {
      WireFrame f = std::move(queue_.front());
      queue_.pop_front();
      ++now_;
      sink_(f);
    }
  }
  std::uint64_t now() const override { return now_; }

 private:
  std::deque<WireFrame> queue_;
  std::uint64_t now_ = 0;
};

// ---------------------------------------------------------------------------
// Deployment configuration and the deterministic data/seed plan shared with
// the plaintext baseline oracle.

struct DeploymentConfig {
  std::uint64_t seed = 42;
  std::uint32_t n_devices = 10;
  std::uint32_t n_fogs = 2;
  std::uint32_t n_microservices = 2;
  std::uint32_t he_bits = 256;
  std::uint64_t epoch = 1;

  double learning_rate = 0.5;
  std::uint32_t epochs = 1;
  std::uint32_t batch_size = 32;
  std::uint32_t samples_per_device = 200;
  std::uint32_t feature_dim = 4;
  double separation = 4.0;
  double device_shift = 0.5;
  std::uint32_t eval_samples = 2000;

  double dp_sigma = 0.0;
  fl::ConvergenceThresholds thresholds;

  std::uint32_t model_dim() const { return feature_dim + 1; }

  void validate() const {
    if (n_devices < 1) raise(ErrorCode::ConfigError, "n_devices must be at least 1");
    if (n_fogs < 1) raise(ErrorCode::ConfigError, "n_fogs must be at least 1");
    if (n_microservices < 1) raise(ErrorCode::ConfigError, "n_microservices must be at least 1");
    if (samples_per_device < 1) raise(ErrorCode::ConfigError, "samples_per_device must be at least 1");
    if (feature_dim < 1) raise(ErrorCode::ConfigError, "feature_dim must be at least 1");
    if (eval_samples < 1) raise(ErrorCode::ConfigError, "eval_samples must be at least 1");
    if (dp_sigma < 0) raise(ErrorCode::ConfigError, "dp sigma cannot be negative");
  }
};

/// All dataset and training-seed derivations, as pure functions of the run
/// seed, so the plaintext baseline reproduces them without protocol state.
struct DataPlan {
  static Key32 root_key(std::uint64_t seed) { return seed_from_u64(seed); }

  static fl::Dataset device_dataset(const Key32& root, const DeploymentConfig& cfg,
                                    std::uint32_t device_index) {
    SeededRng base(root);
    SeededRng shift_rng = base.fork("device-shift", device_index);
    auto shift = fl::random_unit_shift(cfg.feature_dim, cfg.device_shift, shift_rng);
    SeededRng data_rng = base.fork("device-data", device_index);
    return fl::synthetic_blobs(cfg.samples_per_device, cfg.feature_dim, cfg.separation, shift,
                               data_rng);
  }

  static fl::Dataset eval_dataset(const Key32& root, const DeploymentConfig& cfg) {
    SeededRng base(root);
    SeededRng rng = base.fork("eval-data");
    return fl::synthetic_blobs(cfg.eval_samples, cfg.feature_dim, cfg.separation, {}, rng);
  }

  static std::uint64_t train_seed(const Key32& root, std::uint32_t device_index,
                                  std::uint32_t round) {
    SeededRng base(root);
    return base.fork("train-seed", device_index).fork("round", round).u64();
  }
};

// ---------------------------------------------------------------------------

enum class Phase { Distribute, LocalTrain, Upload, FogAggregate, CloudAggregate, Broadcast, Done };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Distribute: return "Distribute";
    case Phase::LocalTrain: return "LocalTrain";
    case Phase::Upload: return "Upload";
    case Phase::FogAggregate: return "FogAggregate";
    case Phase::CloudAggregate: return "CloudAggregate";
    case Phase::Broadcast: return "Broadcast";
    case Phase::Done: return "Done";
  }
  return "?";
}

struct StallInfo {
  std::uint32_t round = 0;
  Phase phase = Phase::Done;
  std::string missing;
};

struct DetectionEvent {
  std::uint64_t time = 0;
  std::uint32_t round = 0;
  std::string kind;    // aead_failure, replayed_tx, replayed_frame, auth_failed,
                       // payload_hash_mismatch, dabe_failure, policy_excluded, ...
  std::string detail;
};

struct RoundTally {
  std::uint32_t round = 0;
  std::uint32_t core_messages = 0;  // M1 + M2 + M3 + broadcast
  std::uint32_t frames = 0;         // every frame incl. auth legs
  std::uint64_t bytes = 0;          // wire bytes for all frames
  std::uint32_t txs_sealed = 0;     // all kinds
  std::uint32_t core_txs_sealed = 0;
};

enum class RoundStatus { Done, Stalled };

/// The whole edge-fog-cloud deployment under one roof: attribute authorities,
/// node keyrings and signing keys, the proof-of-authority ledger, the HE
/// keypair at the cloud, and the four-message round pipeline.
class Deployment {
 public:
  Deployment(DeploymentConfig cfg, Transport& transport)
      : cfg_(std::move(cfg)),
        transport_(transport),
        root_key_(DataPlan::root_key(cfg_.seed)),
        root_(root_key_),
        nonce_rng_(root_.fork("frame-nonce")),
        auth_rng_(root_.fork("auth-challenge")),
        dabe_rng_(root_.fork("dabe-encrypt")),
        he_rng_(root_.fork("he-encrypt")),
        ledger_(root_.fork("sealer-seed").array<32>()),
        codec_(Field::modulus()) {
    cfg_.validate();
    transport_.set_sink([this](const WireFrame& f) { receive(f); });
    setup();
  }

  const DeploymentConfig& config() const { return cfg_; }
  const ledger::Ledger& chain() const { return ledger_; }
  ledger::Ledger& chain() { return ledger_; }
  const fl::GlobalModel& global() const { return global_; }
  const fl::Dataset& eval_data() const { return eval_data_; }
  const he::Keypair& he_keys() const { return he_kp_; }
  const dabe::AuthorityDirectory& directory() const { return directory_; }
  const std::vector<DetectionEvent>& detections() const { return detections_; }
  const std::map<std::uint32_t, RoundTally>& tallies() const { return tallies_; }
  const std::optional<StallInfo>& stall() const { return stall_; }
  bool converged() const { return converged_; }
  std::uint32_t converged_round() const { return converged_round_; }

  std::string device_id(std::uint32_t i) const { return "d" + std::to_string(i); }
  std::string fog_id(std::uint32_t i) const { return "f" + std::to_string(i); }
  std::string ms_id(std::uint32_t i) const { return "m" + std::to_string(i); }
  std::string cloud_id() const { return "c0"; }

  std::string fog_of_device(std::uint32_t i) const { return fog_id(i % cfg_.n_fogs); }
  std::string ms_of_fog(std::uint32_t i) const { return ms_id(i % cfg_.n_microservices); }

  const fl::Dataset& device_data(std::uint32_t i) const { return devices_.at(i).data; }
  const fl::ModelWeights& device_weights(std::uint32_t i) const { return devices_.at(i).weights; }

  const ledger::Transaction* find_tx(const std::string& sender, const ledger::Nonce16& nonce) const {
    auto it = tx_by_ref_.find({sender, nonce});
    return it == tx_by_ref_.end() ? nullptr : &it->second;
  }

  /// Pre-encryption payload bytes per round, for the eavesdropping leak scan.
  const std::vector<Bytes>& device_plaintexts() const { return device_plaintexts_; }

  void set_pre_phase_hook(std::function<void(std::uint32_t, Phase)> hook) {
    pre_phase_hook_ = std::move(hook);
  }

  // -------------------------------------------------------------------------

  RoundStatus run_round(std::uint32_t round) {
    if (stall_) raise(ErrorCode::InvalidParameter, "cannot run a round after a stall");
    tally_ = RoundTally{};
    tally_.round = round;
    frame_log_round_ = round;

    enter_phase(round, Phase::Distribute);
    run_auth_wave(round);
    seal_phase();

    enter_phase(round, Phase::LocalTrain);
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      if (excluded_devices_.count(device_id(i)) > 0) continue;
      fl::TrainingConfig tc;
      tc.learning_rate = cfg_.learning_rate;
      tc.epochs = cfg_.epochs;
      tc.batch_size = cfg_.batch_size;
      tc.seed = DataPlan::train_seed(root_key_, i, round);
      devices_[i].trained = fl::local_train(devices_[i].weights, devices_[i].data, tc);
    }

    enter_phase(round, Phase::Upload);
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) send_m1(i, round);
    transport_.pump();
    seal_phase();

    enter_phase(round, Phase::FogAggregate);
    for (std::uint32_t i = 0; i < cfg_.n_fogs; ++i) send_m2(i, round);
    transport_.pump();
    seal_phase();

    enter_phase(round, Phase::CloudAggregate);
    run_smpc_and_m3(round);
    transport_.pump();
    seal_phase();
    if (!cloud_aggregate(round)) {
      tallies_[round] = tally_;
      return RoundStatus::Stalled;
    }

    enter_phase(round, Phase::Broadcast);
    send_m4(round);
    transport_.pump();
    seal_phase();

    enter_phase(round, Phase::Done);
    round_cleanup(round);
    tallies_[round] = tally_;
    if (fl::has_converged(global_, cfg_.thresholds) && !converged_) {
      converged_ = true;
      converged_round_ = round;
    }
    return RoundStatus::Done;
  }

  // -------------------------------------------------------------------------
  // Adversary entry points used by the simulator.

  /// Re-delivers a captured frame; receiver-side nonce tracking drops it.
  void redeliver(const WireFrame& f) { receive(f); }

  /// Re-submits a captured transaction; the ledger must reject it.
  ledger::SubmitStatus resubmit(const ledger::Transaction& tx) {
    ledger::SubmitStatus st = ledger_.submit(tx);
    if (st == ledger::SubmitStatus::ReplayDetected) {
      note_detection(frame_log_round_, "replayed_tx", "sender " + tx.sender);
    }
    return st;
  }

  /// A rogue principal without usable attribute keys runs the handshake
  /// against a fog; the challenge under the device-admission policy is
  /// undecryptable, so the echo check must fail.
  bool attempt_rogue_auth(const std::string& rogue_id, std::uint32_t fog_index,
                          std::uint32_t round) {
    const std::string fog = fog_id(fog_index);
    dabe::UserKeyring empty_keyring;
    empty_keyring.gid = rogue_id;
    empty_keyring.epoch = cfg_.epoch;
    rogue_keyrings_[rogue_id] = empty_keyring;
    send_frame(make_frame(rogue_id, fog, round, MsgKind::AuthRequest, encode_auth_request(rogue_id)));
    transport_.pump();
    bool ok = sessions_.count({rogue_id, fog, round}) > 0;
    return ok;
  }

  /// A rogue M1 under a guessed session key; AEAD at the fog must reject it.
  void attempt_rogue_m1(const std::string& rogue_id, std::uint32_t fog_index, std::uint32_t round) {
    WireFrame f;
    f.sender = rogue_id;
    f.receiver = fog_id(fog_index);
    f.round = round;
    f.kind = MsgKind::M1;
    f.nonce = nonce_rng_.array<16>();
    f.aead_nonce = nonce_rng_.bytes(kAeadNonceLen);
    Key32 guessed = nonce_rng_.array<32>();
    ByteWriter w;
    w.str("rogue-guess");
    Bytes fake_body = w.take();
    f.body = aead_seal(guessed, f.aead_nonce, fake_body, f.header_ad());
    send_frame(std::move(f));
    transport_.pump();
  }

  bool device_has_session(std::uint32_t device_index, std::uint32_t round) const {
    return sessions_.count({device_id(device_index), fog_of_device(device_index), round}) > 0;
  }

 private:
  struct DeviceState {
    SigningKey sign;
    dabe::UserKeyring keyring;
    fl::Dataset data;
    fl::ModelWeights weights;  // current local model (last accepted global)
    fl::ModelWeights trained;  // this round's local update
    std::uint64_t n_k = 0;
  };
  struct Update {
    std::string device;
    std::uint64_t n_k = 0;
    std::vector<Residue> residues;
  };
  struct FogState {
    SigningKey sign;
    dabe::UserKeyring keyring;
    std::vector<Update> received;  // this round
  };
  struct MsState {
    SigningKey sign;
    dabe::UserKeyring keyring;
    std::vector<Update> batch;  // this round
  };
  struct CloudM3 {
    std::string ms;
    std::uint64_t total_weight = 0;
    Hash32 transcript_hash{};
    std::vector<he::Ciphertext> cts;
  };

  DeploymentConfig cfg_;
  Transport& transport_;
  Key32 root_key_;
  SeededRng root_;
  SeededRng nonce_rng_;
  SeededRng auth_rng_;
  SeededRng dabe_rng_;
  SeededRng he_rng_;
  ledger::Ledger ledger_;
  fp::FixedCodec<Residue> codec_;
  dabe::AuthorityDirectory directory_;
  he::Keypair he_kp_;

  std::vector<DeviceState> devices_;
  std::vector<FogState> fogs_;
  std::vector<MsState> microservices_;
  SigningKey cloud_sign_;
  dabe::UserKeyring cloud_keyring_;
  fl::GlobalModel global_;
  fl::Dataset eval_data_;

  std::map<std::tuple<std::string, std::string, std::uint32_t>, Key32> sessions_;
  std::map<std::tuple<std::string, std::string, std::uint32_t>, Key32> pending_challenges_;
  std::map<std::string, dabe::UserKeyring> rogue_keyrings_;
  std::set<std::pair<std::string, ledger::Nonce16>> seen_frames_;
  std::map<std::pair<std::string, ledger::Nonce16>, ledger::Transaction> tx_by_ref_;
  std::set<std::string> excluded_devices_;  // this round
  std::vector<CloudM3> cloud_inbox_;
  std::vector<DetectionEvent> detections_;
  std::map<std::uint32_t, RoundTally> tallies_;
  RoundTally tally_;
  std::uint32_t frame_log_round_ = 0;
  std::optional<StallInfo> stall_;
  bool converged_ = false;
  std::uint32_t converged_round_ = 0;
  std::vector<Bytes> device_plaintexts_;
  std::function<void(std::uint32_t, Phase)> pre_phase_hook_;

  // ------------------------------------------------------------------ setup

  void setup() {
    using dabe::Attribute;
    std::set<Attribute> edge{{"auth-edge", "iot"}, {"auth-edge", "population"}};
    std::set<Attribute> fog{{"auth-fog", "fog"}};
    for (std::uint32_t i = 0; i < cfg_.n_fogs; ++i) {
      fog.insert({"auth-fog", "region-" + std::to_string(i)});
    }
    std::set<Attribute> cloud{{"auth-cloud", "microservice"}, {"auth-cloud", "cloud"}};
    for (std::uint32_t j = 0; j < cfg_.n_microservices; ++j) {
      cloud.insert({"auth-cloud", "ms-" + std::to_string(j)});
    }
    directory_.register_authority("auth-edge", edge, root_.fork("authority", 0).array<32>());
    directory_.register_authority("auth-fog", fog, root_.fork("authority", 1).array<32>());
    directory_.register_authority("auth-cloud", cloud, root_.fork("authority", 2).array<32>());

    he_kp_ = he::Keypair::generate(cfg_.he_bits, he_rng_);

    const auto* a_edge = directory_.find("auth-edge");
    const auto* a_fog = directory_.find("auth-fog");
    const auto* a_cloud = directory_.find("auth-cloud");

    devices_.resize(cfg_.n_devices);
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      DeviceState& d = devices_[i];
      d.sign = SigningKey::from_seed(root_.fork("sign-" + device_id(i)).array<32>());
      d.keyring = dabe::keygen_user(*a_edge, device_id(i),
                                    {{"auth-edge", "iot"}, {"auth-edge", "population"}}, cfg_.epoch);
      d.data = DataPlan::device_dataset(root_key_, cfg_, i);
      d.weights.assign(cfg_.model_dim(), 0.0);
      d.n_k = d.data.size();
      ledger_.register_node(device_id(i), d.sign.public_key);
    }
    fogs_.resize(cfg_.n_fogs);
    for (std::uint32_t i = 0; i < cfg_.n_fogs; ++i) {
      FogState& f = fogs_[i];
      f.sign = SigningKey::from_seed(root_.fork("sign-" + fog_id(i)).array<32>());
      f.keyring = dabe::keygen_user(
          *a_fog, fog_id(i), {{"auth-fog", "fog"}, {"auth-fog", "region-" + std::to_string(i)}},
          cfg_.epoch);
      ledger_.register_node(fog_id(i), f.sign.public_key);
    }
    microservices_.resize(cfg_.n_microservices);
    for (std::uint32_t j = 0; j < cfg_.n_microservices; ++j) {
      MsState& m = microservices_[j];
      m.sign = SigningKey::from_seed(root_.fork("sign-" + ms_id(j)).array<32>());
      m.keyring = dabe::keygen_user(
          *a_cloud, ms_id(j),
          {{"auth-cloud", "microservice"}, {"auth-cloud", "ms-" + std::to_string(j)}}, cfg_.epoch);
      ledger_.register_node(ms_id(j), m.sign.public_key);
    }
    cloud_sign_ = SigningKey::from_seed(root_.fork("sign-" + cloud_id()).array<32>());
    cloud_keyring_ = dabe::keygen_user(*a_cloud, cloud_id(), {{"auth-cloud", "cloud"}}, cfg_.epoch);
    ledger_.register_node(cloud_id(), cloud_sign_.public_key);

    eval_data_ = DataPlan::eval_dataset(root_key_, cfg_);
    global_.weights.assign(cfg_.model_dim(), 0.0);
    global_.round = 0;

    // Setup round: cloud authenticates to every device and distributes the
    // initial model, so devices start from a ledgered broadcast.
    tally_ = RoundTally{};
    tally_.round = 0;
    frame_log_round_ = 0;
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      send_frame(make_frame(cloud_id(), device_id(i), 0, MsgKind::AuthRequest,
                            encode_auth_request(cloud_id())));
    }
    transport_.pump();
    send_m4(0);
    transport_.pump();
    seal_phase();
    tallies_[0] = tally_;
  }

  // ------------------------------------------------------------- frame plumbing

  WireFrame make_frame(const std::string& sender, const std::string& receiver, std::uint32_t round,
                       MsgKind kind, Bytes body) {
    WireFrame f;
    f.sender = sender;
    f.receiver = receiver;
    f.round = round;
    f.kind = kind;
    f.nonce = nonce_rng_.array<16>();
    f.body = std::move(body);
    return f;
  }

  WireFrame make_sealed_frame(const std::string& sender, const std::string& receiver,
                              std::uint32_t round, MsgKind kind, const Bytes& body,
                              const Key32& session) {
    WireFrame f = make_frame(sender, receiver, round, kind, {});
    f.aead_nonce = nonce_rng_.bytes(kAeadNonceLen);
    f.body = aead_seal(session, f.aead_nonce, body, f.header_ad());
    return f;
  }

  void send_frame(WireFrame f) {
    ++tally_.frames;
    tally_.bytes += f.wire_bytes().size();
    transport_.send(std::move(f));
  }

  /// Submits the tx that must precede a core message; ledger rejection aborts
  /// the send.
  bool log_and_check(ledger::TxKind kind, const std::string& sender, const SigningKey& key,
                     const Hash32& payload_hash, const ledger::Nonce16& nonce) {
    ledger::Transaction tx =
        ledger::make_transaction(kind, sender, payload_hash, nonce, transport_.now(), key);
    ledger::SubmitStatus st = ledger_.submit(tx);
    if (st != ledger::SubmitStatus::Accepted) {
      note_detection(frame_log_round_, std::string("tx_rejected_") + submit_status_name(st),
                     "sender " + sender);
      return false;
    }
    tx_by_ref_[{sender, nonce}] = tx;
    return true;
  }

  void seal_phase() {
    if (ledger_.pending_count() == 0) return;
    const ledger::Block& b = ledger_.seal_block();
    tally_.txs_sealed += static_cast<std::uint32_t>(b.txs.size());
    for (const auto& tx : b.txs) {
      if (tx.kind != ledger::TxKind::KeyEvent) ++tally_.core_txs_sealed;
    }
  }

  void enter_phase(std::uint32_t round, Phase phase) {
    if (pre_phase_hook_) pre_phase_hook_(round, phase);
  }

  void note_detection(std::uint32_t round, std::string kind, std::string detail) {
    detections_.push_back({transport_.now(), round, std::move(kind), std::move(detail)});
  }

  // ------------------------------------------------------------------- auth

  static Bytes encode_auth_request(const std::string& initiator) {
    ByteWriter w;
    w.str("auth-request");
    w.str(initiator);
    return w.take();
  }

  char class_of(const std::string& id) const { return id.empty() ? '?' : id[0]; }

  /// Responder-side admission policy: what the initiating class must prove.
  dabe::AccessPolicy admission_policy(const std::string& responder) const {
    switch (class_of(responder)) {
      case 'f': return directory_.parse_policy("iot");
      case 'm': return directory_.parse_policy("fog");
      case 'c': return directory_.parse_policy("microservice");
      case 'd': return directory_.parse_policy("cloud");
      default: raise(ErrorCode::InvalidParameter, "no admission policy for " + responder);
    }
  }

  const dabe::UserKeyring* keyring_of(const std::string& id) const {
    switch (class_of(id)) {
      case 'd': {
        std::uint32_t i = static_cast<std::uint32_t>(std::stoul(id.substr(1)));
        return i < devices_.size() ? &devices_[i].keyring : nullptr;
      }
      case 'f': {
        std::uint32_t i = static_cast<std::uint32_t>(std::stoul(id.substr(1)));
        return i < fogs_.size() ? &fogs_[i].keyring : nullptr;
      }
      case 'm': {
        std::uint32_t i = static_cast<std::uint32_t>(std::stoul(id.substr(1)));
        return i < microservices_.size() ? &microservices_[i].keyring : nullptr;
      }
      case 'c': return &cloud_keyring_;
      default: {
        auto it = rogue_keyrings_.find(id);
        return it == rogue_keyrings_.end() ? nullptr : &it->second;
      }
    }
  }

  const SigningKey* signing_key_of(const std::string& id) const {
    switch (class_of(id)) {
      case 'd': return &devices_[std::stoul(id.substr(1))].sign;
      case 'f': return &fogs_[std::stoul(id.substr(1))].sign;
      case 'm': return &microservices_[std::stoul(id.substr(1))].sign;
      case 'c': return &cloud_sign_;
      default: return nullptr;
    }
  }

  static Key32 challenge_to_key(const Bytes& challenge) {
    Key32 k{};
    std::copy_n(challenge.begin(), 32, k.begin());
    return k;
  }

  static Key32 auth_echo(const Key32& ck, const std::string& initiator, const std::string& responder,
                         std::uint32_t round) {
    ByteWriter w;
    w.str("auth-echo");
    w.str(initiator);
    w.str(responder);
    w.u32(round);
    return hmac_sha256(ck, w.bytes());
  }

  static Key32 session_key(const Key32& ck, const std::string& initiator,
                           const std::string& responder, std::uint32_t round) {
    ByteWriter w;
    w.str("session");
    w.str(initiator);
    w.str(responder);
    w.u32(round);
    return hmac_sha256(ck, w.bytes());
  }

  void run_auth_wave(std::uint32_t round) {
    excluded_devices_.clear();
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      send_frame(make_frame(device_id(i), fog_of_device(i), round, MsgKind::AuthRequest,
                            encode_auth_request(device_id(i))));
    }
    transport_.pump();
    for (std::uint32_t i = 0; i < cfg_.n_fogs; ++i) {
      send_frame(make_frame(fog_id(i), ms_of_fog(i), round, MsgKind::AuthRequest,
                            encode_auth_request(fog_id(i))));
    }
    transport_.pump();
    for (std::uint32_t j = 0; j < cfg_.n_microservices; ++j) {
      send_frame(make_frame(ms_id(j), cloud_id(), round, MsgKind::AuthRequest,
                            encode_auth_request(ms_id(j))));
    }
    transport_.pump();
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      send_frame(make_frame(cloud_id(), device_id(i), round, MsgKind::AuthRequest,
                            encode_auth_request(cloud_id())));
    }
    transport_.pump();

    // Devices that failed to establish their fog session sit the round out.
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      if (sessions_.count({device_id(i), fog_of_device(i), round}) == 0) {
        excluded_devices_.insert(device_id(i));
        note_detection(round, "device_excluded", device_id(i) + " has no session");
      }
    }
  }

  void handle_auth_request(const WireFrame& f) {
    ByteReader r(f.body);
    if (r.str() != "auth-request") raise(ErrorCode::ParseError, "bad auth request");
    std::string initiator = r.str();

    Bytes challenge = auth_rng_.bytes(32);
    pending_challenges_[{initiator, f.receiver, f.round}] = challenge_to_key(challenge);

    ByteWriter payload;
    payload.str("auth-challenge");
    payload.str(initiator);
    payload.str(f.receiver);
    payload.u32(f.round);
    payload.raw(challenge);

    dabe::DabeCiphertext ct =
        dabe::dabe_encrypt(payload.take(), admission_policy(f.receiver), directory_, cfg_.epoch,
                           dabe_rng_);
    ByteWriter body;
    body.str("auth-challenge");
    ct.encode(body);
    send_frame(make_frame(f.receiver, initiator, f.round, MsgKind::AuthChallenge, body.take()));
  }

  void handle_auth_challenge(const WireFrame& f) {
    // f.sender is the responder; f.receiver the original initiator.
    ByteReader r(f.body);
    if (r.str() != "auth-challenge") raise(ErrorCode::ParseError, "bad auth challenge");
    dabe::DabeCiphertext ct = dabe::DabeCiphertext::decode(r);

    Key32 echo{};
    const dabe::UserKeyring* kr = keyring_of(f.receiver);
    bool decrypted = false;
    if (kr != nullptr) {
      try {
        Bytes payload = dabe::dabe_decrypt(ct, *kr);
        ByteReader pr(payload);
        if (pr.str() != "auth-challenge") raise(ErrorCode::ParseError, "bad challenge payload");
        std::string initiator = pr.str();
        std::string responder = pr.str();
        std::uint32_t round = pr.u32();
        Bytes chal(32);
        for (auto& b : chal) b = pr.u8();
        Key32 ck = challenge_to_key(chal);
        echo = auth_echo(ck, initiator, responder, round);
        sessions_[{initiator, responder, round}] = session_key(ck, initiator, responder, round);
        decrypted = true;
      } catch (const Error&) {
        decrypted = false;
      }
    }
    if (!decrypted) {
      // Respond with garbage so the responder can log the failure.
      auto junk = nonce_rng_.array<32>();
      std::copy(junk.begin(), junk.end(), echo.begin());
    }
    ByteWriter body;
    body.str("auth-response");
    body.raw(echo);
    send_frame(make_frame(f.receiver, f.sender, f.round, MsgKind::AuthResponse, body.take()));
  }

  void handle_auth_response(const WireFrame& f) {
    // f.sender is the initiator; f.receiver the responder who issued the challenge.
    ByteReader r(f.body);
    if (r.str() != "auth-response") raise(ErrorCode::ParseError, "bad auth response");
    Key32 echo{};
    for (auto& b : echo) b = r.u8();

    auto it = pending_challenges_.find({f.sender, f.receiver, f.round});
    if (it == pending_challenges_.end()) return;
    Key32 ck = it->second;
    pending_challenges_.erase(it);

    bool ok = echo == auth_echo(ck, f.sender, f.receiver, f.round);
    if (ok) {
      sessions_[{f.sender, f.receiver, f.round}] = session_key(ck, f.sender, f.receiver, f.round);
    } else {
      sessions_.erase({f.sender, f.receiver, f.round});
      note_detection(f.round, "auth_failed", f.sender + " -> " + f.receiver);
    }

    // KeyEvent either way, logged by the responder.
    ByteWriter rec;
    rec.str("key-event");
    rec.str(f.sender);
    rec.str(f.receiver);
    rec.u32(f.round);
    rec.u8(ok ? 1 : 0);
    const SigningKey* sk = signing_key_of(f.receiver);
    if (sk != nullptr) {
      log_and_check(ledger::TxKind::KeyEvent, f.receiver, *sk, sha256(rec.bytes()),
                    nonce_rng_.array<16>());
    }
  }

  // ------------------------------------------------------------------- M1-M4

  Bytes encode_update_payload(std::uint32_t device_index, std::uint32_t round,
                              const std::vector<Residue>& residues) {
    ByteWriter w;
    w.str("m1-payload");
    w.str(device_id(device_index));
    w.u32(round);
    w.u64(devices_[device_index].n_k);
    w.u32(static_cast<std::uint32_t>(residues.size()));
    for (Residue v : residues) Field::encode(w, v);
    return w.take();
  }

  void send_m1(std::uint32_t i, std::uint32_t round) {
    const std::string dev = device_id(i);
    if (excluded_devices_.count(dev) > 0) return;
    auto session = sessions_.find({dev, fog_of_device(i), round});
    if (session == sessions_.end()) return;

    std::uint64_t clip_events = 0;
    std::vector<Residue> residues = codec_.encode_vector(devices_[i].trained, &clip_events);
    clip_events_total_ += clip_events;
    Bytes payload = encode_update_payload(i, round, residues);
    device_plaintexts_.push_back(payload);

    std::uint32_t fog_index = i % cfg_.n_fogs;
    dabe::AccessPolicy policy =
        directory_.parse_policy("fog AND region-" + std::to_string(fog_index));
    dabe::DabeCiphertext ct = dabe::dabe_encrypt(payload, policy, directory_, cfg_.epoch, dabe_rng_);

    ByteWriter body;
    body.str("m1");
    body.str(dev);
    body.u32(round);
    ct.encode(body);
    Bytes body_bytes = body.take();

    WireFrame f = make_sealed_frame(dev, fog_of_device(i), round, MsgKind::M1, body_bytes,
                                    session->second);
    if (!log_and_check(ledger::TxKind::DataTransfer, dev, devices_[i].sign, sha256(body_bytes),
                       f.nonce)) {
      return;
    }
    ++tally_.core_messages;
    send_frame(std::move(f));
  }

  void handle_m1(const WireFrame& f) {
    std::uint32_t fog_index = static_cast<std::uint32_t>(std::stoul(f.receiver.substr(1)));
    auto session = sessions_.find({f.sender, f.receiver, f.round});
    if (session == sessions_.end()) {
      note_detection(f.round, "aead_failure", "m1 from " + f.sender + " (no session)");
      excluded_devices_.insert(f.sender);
      return;
    }
    auto body = aead_open(session->second, f.aead_nonce, f.body, f.header_ad());
    if (!body) {
      note_detection(f.round, "aead_failure", "m1 from " + f.sender);
      excluded_devices_.insert(f.sender);
      return;
    }
    if (!payload_hash_matches(f.sender, f.nonce, *body)) {
      note_detection(f.round, "payload_hash_mismatch", "m1 from " + f.sender);
      excluded_devices_.insert(f.sender);
      return;
    }
    ByteReader r(*body);
    if (r.str() != "m1") raise(ErrorCode::ParseError, "bad m1 body");
    std::string dev = r.str();
    std::uint32_t round = r.u32();
    dabe::DabeCiphertext ct = dabe::DabeCiphertext::decode(r);
    if (dev != f.sender || round != f.round) {
      note_detection(f.round, "header_mismatch", "m1 from " + f.sender);
      return;
    }
    Bytes payload;
    try {
      payload = dabe::dabe_decrypt(ct, fogs_[fog_index].keyring);
    } catch (const Error& e) {
      note_detection(f.round, "dabe_failure", std::string("m1: ") + e.what());
      excluded_devices_.insert(f.sender);
      return;
    }
    ByteReader pr(payload);
    if (pr.str() != "m1-payload") raise(ErrorCode::ParseError, "bad m1 payload");
    Update u;
    u.device = pr.str();
    std::uint32_t pay_round = pr.u32();
    u.n_k = pr.u64();
    std::uint32_t dim = pr.u32();
    u.residues.resize(dim);
    for (auto& v : u.residues) {
      std::uint64_t hi = pr.u64();
      std::uint64_t lo = pr.u64();
      v = (static_cast<Residue>(hi) << 64) | lo;
    }
    if (u.device != dev || pay_round != f.round || dim != cfg_.model_dim()) {
      note_detection(f.round, "header_mismatch", "m1 payload from " + f.sender);
      return;
    }
    fogs_[fog_index].received.push_back(std::move(u));
  }

  void send_m2(std::uint32_t fog_index, std::uint32_t round) {
    FogState& fog = fogs_[fog_index];
    if (fog.received.empty()) return;  // no devices this round: no M2
    const std::string fid = fog_id(fog_index);
    const std::string mid = ms_of_fog(fog_index);
    auto session = sessions_.find({fid, mid, round});
    if (session == sessions_.end()) return;

    std::sort(fog.received.begin(), fog.received.end(),
              [](const Update& a, const Update& b) { return a.device < b.device; });

    ByteWriter payload;
    payload.str("m2-payload");
    payload.str(fid);
    payload.u32(round);
    payload.u32(static_cast<std::uint32_t>(fog.received.size()));
    for (const auto& u : fog.received) {
      payload.str(u.device);
      payload.u64(u.n_k);
      payload.u32(static_cast<std::uint32_t>(u.residues.size()));
      for (Residue v : u.residues) Field::encode(payload, v);
    }
    std::uint32_t ms_index = fog_index % cfg_.n_microservices;
    dabe::AccessPolicy policy =
        directory_.parse_policy("microservice AND ms-" + std::to_string(ms_index));
    dabe::DabeCiphertext ct =
        dabe::dabe_encrypt(payload.take(), policy, directory_, cfg_.epoch, dabe_rng_);

    ByteWriter body;
    body.str("m2");
    body.str(fid);
    body.u32(round);
    ct.encode(body);
    Bytes body_bytes = body.take();

    WireFrame f = make_sealed_frame(fid, mid, round, MsgKind::M2, body_bytes, session->second);
    if (!log_and_check(ledger::TxKind::ModelForward, fid, fog.sign, sha256(body_bytes), f.nonce)) {
      return;
    }
    ++tally_.core_messages;
    send_frame(std::move(f));
  }

  void handle_m2(const WireFrame& f) {
    std::uint32_t ms_index = static_cast<std::uint32_t>(std::stoul(f.receiver.substr(1)));
    auto session = sessions_.find({f.sender, f.receiver, f.round});
    if (session == sessions_.end()) {
      note_detection(f.round, "aead_failure", "m2 from " + f.sender + " (no session)");
      return;
    }
    auto body = aead_open(session->second, f.aead_nonce, f.body, f.header_ad());
    if (!body) {
      note_detection(f.round, "aead_failure", "m2 from " + f.sender);
      return;
    }
    if (!payload_hash_matches(f.sender, f.nonce, *body)) {
      note_detection(f.round, "payload_hash_mismatch", "m2 from " + f.sender);
      return;
    }
    ByteReader r(*body);
    if (r.str() != "m2") raise(ErrorCode::ParseError, "bad m2 body");
    std::string fid = r.str();
    std::uint32_t round = r.u32();
    dabe::DabeCiphertext ct = dabe::DabeCiphertext::decode(r);
    if (fid != f.sender || round != f.round) {
      note_detection(f.round, "header_mismatch", "m2 from " + f.sender);
      return;
    }
    Bytes payload;
    try {
      payload = dabe::dabe_decrypt(ct, microservices_[ms_index].keyring);
    } catch (const Error& e) {
      note_detection(f.round, "dabe_failure", std::string("m2: ") + e.what());
      return;
    }
    ByteReader pr(payload);
    if (pr.str() != "m2-payload") raise(ErrorCode::ParseError, "bad m2 payload");
    pr.str();   // fog id, already checked against sender
    pr.u32();   // round
    std::uint32_t count = pr.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
      Update u;
      u.device = pr.str();
      u.n_k = pr.u64();
      std::uint32_t dim = pr.u32();
      u.residues.resize(dim);
      for (auto& v : u.residues) {
        std::uint64_t hi = pr.u64();
        std::uint64_t lo = pr.u64();
        v = (static_cast<Residue>(hi) << 64) | lo;
      }
      microservices_[ms_index].batch.push_back(std::move(u));
    }
  }

  void run_smpc_and_m3(std::uint32_t round) {
    const std::uint32_t n = cfg_.n_microservices;
    const std::uint32_t d = cfg_.model_dim();

    std::vector<std::vector<Residue>> inputs(n, std::vector<Residue>(d, 0));
    std::vector<std::uint64_t> weights(n, 0);
    for (std::uint32_t j = 0; j < n; ++j) {
      for (const auto& u : microservices_[j].batch) {
        for (std::uint32_t c = 0; c < d; ++c) {
          inputs[j][c] = Field::add(inputs[j][c], Field::mul(u.residues[c], u.n_k));
        }
        weights[j] += u.n_k;
      }
    }

    SeededRng smpc_rng = root_.fork("smpc", round);
    smpc::SumResult<Field> sum = smpc::secure_vector_sum<Field>(inputs, smpc_rng);
    Hash32 th = sum.transcript.hash();

    for (std::uint32_t j = 0; j < n; ++j) {
      const std::string mid = ms_id(j);
      auto session = sessions_.find({mid, cloud_id(), round});
      if (session == sessions_.end()) continue;

      ByteWriter body;
      body.str("m3");
      body.str(mid);
      body.u32(round);
      body.u64(weights[j]);
      body.raw(th);
      body.u32(d);
      for (Residue v : sum.partials[j]) {
        he::Ciphertext ct = he::encrypt(he_kp_.pub, bigint_from_residue(v), he_rng_);
        he::encode_ciphertext(body, ct);
      }
      Bytes body_bytes = body.take();

      WireFrame f = make_sealed_frame(mid, cloud_id(), round, MsgKind::M3, body_bytes,
                                      session->second);
      if (!log_and_check(ledger::TxKind::Aggregation, mid, microservices_[j].sign,
                         sha256(body_bytes), f.nonce)) {
        continue;
      }
      ++tally_.core_messages;
      send_frame(std::move(f));
    }
  }

  void handle_m3(const WireFrame& f) {
    auto session = sessions_.find({f.sender, f.receiver, f.round});
    if (session == sessions_.end()) {
      note_detection(f.round, "aead_failure", "m3 from " + f.sender + " (no session)");
      return;
    }
    auto body = aead_open(session->second, f.aead_nonce, f.body, f.header_ad());
    if (!body) {
      note_detection(f.round, "aead_failure", "m3 from " + f.sender);
      return;
    }
    if (!payload_hash_matches(f.sender, f.nonce, *body)) {
      note_detection(f.round, "payload_hash_mismatch", "m3 from " + f.sender);
      return;
    }
    ByteReader r(*body);
    if (r.str() != "m3") raise(ErrorCode::ParseError, "bad m3 body");
    CloudM3 m;
    m.ms = r.str();
    std::uint32_t round = r.u32();
    m.total_weight = r.u64();
    m.transcript_hash = r.arr<32>();
    std::uint32_t dim = r.u32();
    if (m.ms != f.sender || round != f.round || dim != cfg_.model_dim()) {
      note_detection(f.round, "header_mismatch", "m3 from " + f.sender);
      return;
    }
    m.cts.reserve(dim);
    for (std::uint32_t c = 0; c < dim; ++c) m.cts.push_back(he::decode_ciphertext(r));
    cloud_inbox_.push_back(std::move(m));
  }

  bool cloud_aggregate(std::uint32_t round) {
    const std::uint32_t n = cfg_.n_microservices;
    if (cloud_inbox_.size() != n) {
      std::set<std::string> have;
      for (const auto& m : cloud_inbox_) have.insert(m.ms);
      std::string missing;
      for (std::uint32_t j = 0; j < n; ++j) {
        if (have.count(ms_id(j)) == 0) missing += (missing.empty() ? "" : ",") + ms_id(j);
      }
      stall_ = StallInfo{round, Phase::CloudAggregate, "missing M3 from " + missing};
      return false;
    }
    std::sort(cloud_inbox_.begin(), cloud_inbox_.end(),
              [](const CloudM3& a, const CloudM3& b) { return a.ms < b.ms; });

    std::uint64_t total_weight = 0;
    for (const auto& m : cloud_inbox_) total_weight += m.total_weight;
    if (total_weight == 0) {
      stall_ = StallInfo{round, Phase::CloudAggregate, "no device contributed samples"};
      return false;
    }

    const std::uint32_t d = cfg_.model_dim();
    he::BigInt p = field_prime_bigint();
    fl::ModelWeights avg(d, 0.0);
    for (std::uint32_t c = 0; c < d; ++c) {
      he::Ciphertext acc = cloud_inbox_[0].cts[c];
      for (std::uint32_t j = 1; j < n; ++j) acc = he::add(he_kp_.pub, acc, cloud_inbox_[j].cts[c]);
      // The decrypted value is the plain integer sum of the partials (each
      // below p, so the sum stays far under the Paillier modulus); reducing
      // mod p yields the SMPC total.
      he::BigInt integer_sum = he::decrypt(he_kp_.pub, he_kp_.priv, acc);
      Residue residue = residue_from_bigint(integer_sum % p);
      avg[c] = codec_.decode(residue, total_weight);
    }

    if (cfg_.dp_sigma > 0.0) {
      SeededRng noise = root_.fork("dp-noise", round);
      avg = dp::gaussian_perturb(avg, cfg_.dp_sigma, noise);
    }
    global_.weights = std::move(avg);
    global_.round = round;
    fl::EvalResult ev = fl::evaluate(global_.weights, eval_data_);
    global_.history.push_back({round, ev.loss, ev.accuracy});
    return true;
  }

  void send_m4(std::uint32_t round) {
    ByteWriter payload;
    payload.str("m4-payload");
    payload.u32(round);
    payload.u32(static_cast<std::uint32_t>(global_.weights.size()));
    for (double v : global_.weights) payload.f64(v);

    dabe::AccessPolicy policy = directory_.parse_policy("population");
    dabe::DabeCiphertext ct =
        dabe::dabe_encrypt(payload.take(), policy, directory_, cfg_.epoch, dabe_rng_);

    ByteWriter body;
    body.str("m4");
    body.u32(round);
    ct.encode(body);
    Bytes body_bytes = body.take();

    WireFrame f = make_frame(cloud_id(), "population", round, MsgKind::M4, body_bytes);
    if (!log_and_check(ledger::TxKind::GlobalUpdate, cloud_id(), cloud_sign_, sha256(body_bytes),
                       f.nonce)) {
      return;
    }
    ++tally_.core_messages;
    send_frame(std::move(f));
  }

  void handle_m4(const WireFrame& f) {
    if (!payload_hash_matches(f.sender, f.nonce, f.body)) {
      note_detection(f.round, "payload_hash_mismatch", "m4 broadcast");
      return;
    }
    ByteReader r(f.body);
    if (r.str() != "m4") raise(ErrorCode::ParseError, "bad m4 body");
    std::uint32_t round = r.u32();
    dabe::DabeCiphertext ct = dabe::DabeCiphertext::decode(r);
    if (round != f.round) {
      note_detection(f.round, "header_mismatch", "m4 broadcast");
      return;
    }
    for (std::uint32_t i = 0; i < cfg_.n_devices; ++i) {
      try {
        Bytes payload = dabe::dabe_decrypt(ct, devices_[i].keyring);
        ByteReader pr(payload);
        if (pr.str() != "m4-payload") raise(ErrorCode::ParseError, "bad m4 payload");
        pr.u32();  // round
        std::uint32_t dim = pr.u32();
        fl::ModelWeights w(dim);
        for (auto& v : w) v = pr.f64();
        devices_[i].weights = std::move(w);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::PolicyNotSatisfied) {
          note_detection(f.round, "policy_excluded", device_id(i) + " kept previous model");
        } else {
          note_detection(f.round, "dabe_failure", std::string("m4 at ") + device_id(i) + ": " +
                                                      e.what());
        }
      }
    }
  }

  bool payload_hash_matches(const std::string& sender, const ledger::Nonce16& nonce,
                            const Bytes& body) const {
    auto it = tx_by_ref_.find({sender, nonce});
    if (it == tx_by_ref_.end()) return false;
    return it->second.payload_hash == sha256(body);
  }

  void round_cleanup(std::uint32_t round) {
    (void)round;
    for (auto& f : fogs_) f.received.clear();
    for (auto& m : microservices_) m.batch.clear();
    cloud_inbox_.clear();
  }

  // ------------------------------------------------------------------ receive

  void receive(const WireFrame& f) {
    if (!seen_frames_.insert({f.sender, f.nonce}).second) {
      note_detection(f.round, "replayed_frame", msg_kind_name(f.kind) + std::string(" from ") +
                                                    f.sender);
      return;
    }
    try {
      switch (f.kind) {
        case MsgKind::AuthRequest: handle_auth_request(f); break;
        case MsgKind::AuthChallenge: handle_auth_challenge(f); break;
        case MsgKind::AuthResponse: handle_auth_response(f); break;
        case MsgKind::M1: handle_m1(f); break;
        case MsgKind::M2: handle_m2(f); break;
        case MsgKind::M3: handle_m3(f); break;
        case MsgKind::M4: handle_m4(f); break;
      }
    } catch (const Error& e) {
      note_detection(f.round, "malformed_frame",
                     msg_kind_name(f.kind) + std::string(": ") + e.what());
    }
  }

 public:
  std::uint64_t clip_events() const { return clip_events_total_; }

 private:
  std::uint64_t clip_events_total_ = 0;
};

}  // namespace fldabe::protocol
