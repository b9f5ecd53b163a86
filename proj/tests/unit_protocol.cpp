#include <catch2/catch_amalgamated.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include "fldabe/protocol.hpp"

using namespace fldabe;
using protocol::Deployment;
using protocol::DeploymentConfig;
using protocol::Field;
using protocol::MsgKind;
using protocol::Phase;
using protocol::Residue;
using protocol::RoundStatus;
using protocol::WireFrame;

namespace {

DeploymentConfig small_config() {
  DeploymentConfig cfg;
  cfg.seed = 7;
  cfg.n_devices = 4;
  cfg.n_fogs = 2;
  cfg.n_microservices = 2;
  cfg.samples_per_device = 50;
  cfg.eval_samples = 200;
  return cfg;
}

struct RecordingTransport : protocol::ImmediateTransport {
  std::vector<WireFrame> log;
  void send(WireFrame f) override {
    log.push_back(f);
    protocol::ImmediateTransport::send(std::move(f));
  }
};

struct DropTransport : protocol::ImmediateTransport {
  MsgKind drop_kind = MsgKind::M3;
  std::string drop_sender;  // drop only this sender if set
  void send(WireFrame f) override {
    if (f.kind == drop_kind && (drop_sender.empty() || f.sender == drop_sender)) return;
    protocol::ImmediateTransport::send(std::move(f));
  }
};

bool has_detection(const Deployment& dep, const std::string& kind, const std::string& needle = "") {
  for (const auto& d : dep.detections()) {
    if (d.kind == kind && d.detail.find(needle) != std::string::npos) return true;
  }
  return false;
}

// Independent recomputation of one aggregation round: local training from the
// given start weights, fixed-point encoding, sample-weighted field sum, decode.
fl::ModelWeights expected_round_weights(const DeploymentConfig& cfg, std::uint32_t round,
                                        const fl::ModelWeights& start) {
  Key32 root = protocol::DataPlan::root_key(cfg.seed);
  fp::FixedCodec<Residue> codec(Field::modulus());
  std::vector<Residue> acc(cfg.model_dim(), 0);
  std::uint64_t total_n = 0;
  for (std::uint32_t i = 0; i < cfg.n_devices; ++i) {
    fl::Dataset data = protocol::DataPlan::device_dataset(root, cfg, i);
    fl::TrainingConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.seed = protocol::DataPlan::train_seed(root, i, round);
    fl::ModelWeights w = fl::local_train(start, data, tc);
    std::vector<Residue> res = codec.encode_vector(w);
    for (std::uint32_t c = 0; c < cfg.model_dim(); ++c) {
      acc[c] = Field::add(acc[c], Field::mul(res[c], static_cast<Residue>(data.size())));
    }
    total_n += data.size();
  }
  fl::ModelWeights out(cfg.model_dim());
  for (std::uint32_t c = 0; c < cfg.model_dim(); ++c) out[c] = codec.decode(acc[c], total_n);
  return out;
}

}  // namespace

TEST_CASE("fixed-point codec round-trips, clips, and folds divisors") {
  fp::FixedCodec<Residue> codec(Field::modulus());
  for (double x : {0.0, 1.5, -2.25, 7.999, -7.999, 1.0 / (1 << 16)}) {
    CHECK(codec.decode(codec.encode(x)) == Catch::Approx(x).margin(1.0 / (1 << 17)));
  }
  CHECK(codec.decode(codec.encode(-1.0)) == -1.0);  // exactly representable

  std::uint64_t clips = 0;
  CHECK(codec.decode(codec.encode(9.5, &clips)) == 8.0);
  CHECK(codec.decode(codec.encode(-123.0, &clips)) == -8.0);
  CHECK(clips == 2);
  codec.encode(3.0, &clips);
  CHECK(clips == 2);  // in-range value doesn't count

  // negative values land in the upper half of the ring
  Residue r = codec.encode(-1.0);
  CHECK(r == Field::modulus() - (1 << 16));

  // divisor folds a weighted-average divide into the decode
  Residue sum = Field::add(Field::mul(codec.encode(2.0), 3), Field::mul(codec.encode(-1.0), 1));
  CHECK(codec.decode(sum, 4) == Catch::Approx((3 * 2.0 - 1.0) / 4.0));

  CHECK_THROWS_AS(codec.encode(std::nan("")), Error);
  CHECK_THROWS_AS(codec.decode(Field::modulus()), Error);
  CHECK_THROWS_AS(codec.decode(1, 0), Error);
  CHECK_THROWS_AS(fp::FixedCodec<std::uint64_t>(1000), Error);
}

TEST_CASE("residue/bigint bridge agrees with boost") {
  SeededRng rng(seed_from_u64(80));
  CHECK(protocol::field_prime_bigint() == (he::BigInt(1) << 127) - 1);
  for (int i = 0; i < 50; ++i) {
    Residue v = Field::sample(rng);
    he::BigInt b = protocol::bigint_from_residue(v);
    CHECK(protocol::residue_from_bigint(b) == v);
    CHECK(b == he::BigInt((boost::multiprecision::cpp_int(static_cast<std::uint64_t>(v >> 64))
                               .convert_to<he::BigInt>()
                           << 64) |
                          static_cast<std::uint64_t>(v)));
  }
}

TEST_CASE("config validation names the offending field") {
  DeploymentConfig cfg = small_config();
  cfg.n_devices = 0;
  try {
    cfg.validate();
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(std::string(e.what()).find("n_devices") != std::string::npos);
  }
  cfg = small_config();
  cfg.dp_sigma = -0.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.he_bits = 512;
  protocol::ImmediateTransport net;
  CHECK_THROWS_AS(Deployment(cfg, net), Error);
}

TEST_CASE("data plan is a pure function of the seed") {
  DeploymentConfig cfg = small_config();
  Key32 root = protocol::DataPlan::root_key(cfg.seed);
  fl::Dataset a = protocol::DataPlan::device_dataset(root, cfg, 2);
  fl::Dataset b = protocol::DataPlan::device_dataset(root, cfg, 2);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == cfg.samples_per_device);

  fl::Dataset other = protocol::DataPlan::device_dataset(root, cfg, 3);
  CHECK(a.features != other.features);

  CHECK(protocol::DataPlan::train_seed(root, 1, 4) == protocol::DataPlan::train_seed(root, 1, 4));
  CHECK(protocol::DataPlan::train_seed(root, 1, 4) != protocol::DataPlan::train_seed(root, 1, 5));
  CHECK(protocol::DataPlan::train_seed(root, 1, 4) != protocol::DataPlan::train_seed(root, 2, 4));

  fl::Dataset eval = protocol::DataPlan::eval_dataset(root, cfg);
  CHECK(eval.size() == cfg.eval_samples);
}

TEST_CASE("a full deployment round produces the exact pipeline output") {
  DeploymentConfig cfg = small_config();
  protocol::ImmediateTransport net;
  Deployment dep(cfg, net);

  // setup: genesis + one setup block (cloud-device handshakes and model push)
  REQUIRE(dep.chain().chain().size() == 2);
  const auto& setup_block = dep.chain().chain()[1];
  std::uint32_t setup_keyevents = 0, setup_updates = 0;
  for (const auto& tx : setup_block.txs) {
    if (tx.kind == ledger::TxKind::KeyEvent) ++setup_keyevents;
    if (tx.kind == ledger::TxKind::GlobalUpdate) ++setup_updates;
  }
  CHECK(setup_keyevents == cfg.n_devices);
  CHECK(setup_updates == 1);

  REQUIRE(dep.run_round(1) == RoundStatus::Done);
  fl::ModelWeights expect1 = expected_round_weights(cfg, 1, fl::ModelWeights(cfg.model_dim(), 0.0));
  CHECK(dep.global().weights == expect1);  // bitwise: the pipeline is exact arithmetic
  CHECK(dep.global().round == 1);
  REQUIRE(dep.global().history.size() == 1);

  // every device adopted the broadcast model
  for (std::uint32_t i = 0; i < cfg.n_devices; ++i) {
    CHECK(dep.device_weights(i) == expect1);
    CHECK(dep.device_has_session(i, 1));
  }

  REQUIRE(dep.run_round(2) == RoundStatus::Done);
  CHECK(dep.global().weights == expected_round_weights(cfg, 2, expect1));

  // tallies: |D|+|F|+|M|+1 core messages, all ledgered before sending
  const auto& t1 = dep.tallies().at(1);
  CHECK(t1.core_messages == cfg.n_devices + cfg.n_fogs + cfg.n_microservices + 1);
  CHECK(t1.core_txs_sealed == t1.core_messages);
  CHECK(t1.txs_sealed == t1.core_messages + 2 * cfg.n_devices + cfg.n_fogs + cfg.n_microservices);
  CHECK(t1.frames > t1.core_messages);  // auth legs ride on top
  CHECK(t1.bytes > 0);

  // chain structure: 5 blocks per round, kinds laid out per phase
  REQUIRE(dep.chain().chain().size() == 2 + 2 * 5);
  CHECK_FALSE(dep.chain().verify_chain().has_value());
  auto all_of_kind = [&](std::size_t height, ledger::TxKind k) {
    const auto& b = dep.chain().chain()[height];
    for (const auto& tx : b.txs) {
      if (tx.kind != k) return false;
    }
    return !b.txs.empty();
  };
  CHECK(all_of_kind(2, ledger::TxKind::KeyEvent));
  CHECK(all_of_kind(3, ledger::TxKind::DataTransfer));
  CHECK(all_of_kind(4, ledger::TxKind::ModelForward));
  CHECK(all_of_kind(5, ledger::TxKind::Aggregation));
  CHECK(all_of_kind(6, ledger::TxKind::GlobalUpdate));
  CHECK(dep.chain().chain()[3].txs.size() == cfg.n_devices);
  CHECK(dep.chain().chain()[6].txs.size() == 1);

  CHECK(dep.detections().empty());  // clean run
  CHECK(dep.clip_events() == 0);    // weights stay far inside the clip range
}

TEST_CASE("deployments are deterministic end to end") {
  DeploymentConfig cfg = small_config();
  protocol::ImmediateTransport net_a, net_b;
  Deployment a(cfg, net_a), b(cfg, net_b);
  for (std::uint32_t r = 1; r <= 2; ++r) {
    REQUIRE(a.run_round(r) == RoundStatus::Done);
    REQUIRE(b.run_round(r) == RoundStatus::Done);
  }
  CHECK(a.global().weights == b.global().weights);
  CHECK(a.chain().export_jsonl() == b.chain().export_jsonl());

  DeploymentConfig other = small_config();
  other.seed = 8;
  protocol::ImmediateTransport net_c;
  Deployment c(other, net_c);
  REQUIRE(c.run_round(1) == RoundStatus::Done);
  CHECK(c.global().weights != a.global().weights);
}

TEST_CASE("core messages carry ledger entries bound to the frame") {
  DeploymentConfig cfg = small_config();
  RecordingTransport net;
  Deployment dep(cfg, net);  // setup already broadcasts the initial model
  REQUIRE(dep.run_round(1) == RoundStatus::Done);

  auto tx_kind_for = [](MsgKind k) {
    switch (k) {
      case MsgKind::M1: return ledger::TxKind::DataTransfer;
      case MsgKind::M2: return ledger::TxKind::ModelForward;
      case MsgKind::M3: return ledger::TxKind::Aggregation;
      default: return ledger::TxKind::GlobalUpdate;
    }
  };

  std::uint32_t sealed = 0, broadcast = 0;
  for (const auto& f : net.log) {
    if (f.kind != MsgKind::M1 && f.kind != MsgKind::M2 && f.kind != MsgKind::M3 &&
        f.kind != MsgKind::M4) {
      continue;
    }
    const ledger::Transaction* tx = dep.find_tx(f.sender, f.nonce);
    REQUIRE(tx != nullptr);
    CHECK(tx->kind == tx_kind_for(f.kind));
    CHECK(tx->sender == f.sender);
    if (f.kind == MsgKind::M4) {
      // broadcast bodies travel in the clear, so the commitment is direct
      CHECK(tx->payload_hash == sha256(f.body));
      ++broadcast;
    } else {
      // sealed bodies are ciphertext; the ledger commits to the plaintext
      CHECK(tx->payload_hash != sha256(f.body));
      ++sealed;
    }
  }
  CHECK(sealed == cfg.n_devices + cfg.n_fogs + cfg.n_microservices);
  CHECK(broadcast == 2);  // initial distribution plus the round-1 update
}

TEST_CASE("replayed frames and transactions are flagged and ignored") {
  DeploymentConfig cfg = small_config();
  RecordingTransport net;
  Deployment dep(cfg, net);
  REQUIRE(dep.run_round(1) == RoundStatus::Done);

  WireFrame m1;
  bool found = false;
  for (const auto& f : net.log) {
    if (f.kind == MsgKind::M1) {
      m1 = f;
      found = true;
      break;
    }
  }
  REQUIRE(found);

  fl::ModelWeights before = dep.global().weights;
  dep.redeliver(m1);
  CHECK(has_detection(dep, "replayed_frame", m1.sender));
  CHECK(dep.global().weights == before);

  const ledger::Transaction* tx = dep.find_tx(m1.sender, m1.nonce);
  REQUIRE(tx != nullptr);
  CHECK(dep.resubmit(*tx) == ledger::SubmitStatus::ReplayDetected);
  CHECK(has_detection(dep, "replayed_tx", m1.sender));
}

TEST_CASE("rogue principals fail authentication and AEAD") {
  DeploymentConfig cfg = small_config();
  protocol::ImmediateTransport net;
  Deployment dep(cfg, net);
  REQUIRE(dep.run_round(1) == RoundStatus::Done);

  CHECK_FALSE(dep.attempt_rogue_auth("x9", 0, 2));
  CHECK(has_detection(dep, "auth_failed", "x9"));

  dep.attempt_rogue_m1("x9", 0, 2);
  CHECK(has_detection(dep, "aead_failure", "x9"));
  CHECK(has_detection(dep, "aead_failure", "no session"));
}

TEST_CASE("missing aggregation messages stall the round explicitly") {
  DeploymentConfig cfg = small_config();
  DropTransport net;  // swallows every M3
  Deployment dep(cfg, net);
  CHECK(dep.run_round(1) == RoundStatus::Stalled);
  REQUIRE(dep.stall().has_value());
  CHECK(dep.stall()->round == 1);
  CHECK(dep.stall()->phase == Phase::CloudAggregate);
  CHECK(dep.stall()->missing.find("m0") != std::string::npos);
  CHECK(dep.stall()->missing.find("m1") != std::string::npos);
  CHECK(dep.global().round == 0);  // no update happened
  CHECK(dep.tallies().count(1) == 1);
  CHECK_THROWS_AS(dep.run_round(2), Error);

  DropTransport partial;
  partial.drop_sender = "m1";  // only one microservice silenced
  Deployment dep2(cfg, partial);
  CHECK(dep2.run_round(1) == RoundStatus::Stalled);
  REQUIRE(dep2.stall().has_value());
  CHECK(dep2.stall()->missing == "missing M3 from m1");
}

TEST_CASE("devices that cannot authenticate are excluded from the round") {
  DeploymentConfig cfg = small_config();
  DropTransport net;
  net.drop_kind = MsgKind::AuthRequest;
  net.drop_sender = "d1";
  Deployment dep(cfg, net);
  REQUIRE(dep.run_round(1) == RoundStatus::Done);
  CHECK(has_detection(dep, "device_excluded", "d1"));
  CHECK_FALSE(dep.device_has_session(1, 1));
  CHECK(dep.device_has_session(0, 1));
  // one fewer upload, everything else intact
  CHECK(dep.tallies().at(1).core_messages == (cfg.n_devices - 1) + cfg.n_fogs +
                                                 cfg.n_microservices + 1);

  // the excluded device still adopts the broadcast (population policy covers it)
  CHECK(dep.device_weights(1) == dep.global().weights);
}

TEST_CASE("phase hook observes the round lifecycle in order") {
  DeploymentConfig cfg = small_config();
  protocol::ImmediateTransport net;
  Deployment dep(cfg, net);
  std::vector<Phase> seen;
  dep.set_pre_phase_hook([&](std::uint32_t round, Phase p) {
    if (round == 1) seen.push_back(p);
  });
  REQUIRE(dep.run_round(1) == RoundStatus::Done);
  std::vector<Phase> want{Phase::Distribute, Phase::LocalTrain,     Phase::Upload,
                          Phase::FogAggregate, Phase::CloudAggregate, Phase::Broadcast,
                          Phase::Done};
  CHECK(seen == want);
  CHECK(std::string(protocol::phase_name(Phase::CloudAggregate)) == "CloudAggregate");
}

TEST_CASE("device plaintexts never reuse wire bytes") {
  DeploymentConfig cfg = small_config();
  RecordingTransport net;
  Deployment dep(cfg, net);
  REQUIRE(dep.run_round(1) == RoundStatus::Done);

  REQUIRE(dep.device_plaintexts().size() == cfg.n_devices);
  for (const auto& plain : dep.device_plaintexts()) {
    REQUIRE(plain.size() > 16);
    for (const auto& f : net.log) {
      Bytes wire = f.wire_bytes();
      bool leaked = std::search(wire.begin(), wire.end(), plain.begin(), plain.end()) != wire.end();
      CHECK_FALSE(leaked);
    }
  }
}
