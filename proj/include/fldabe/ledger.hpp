#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"

namespace fldabe::ledger {

using Nonce16 = std::array<std::uint8_t, 16>;

enum class TxKind : std::uint8_t {
  DataTransfer = 0,
  ModelForward = 1,
  Aggregation = 2,
  GlobalUpdate = 3,
  KeyEvent = 4,
};

inline const char* tx_kind_name(TxKind k) {
  switch (k) {
    case TxKind::DataTransfer: return "DataTransfer";
    case TxKind::ModelForward: return "ModelForward";
    case TxKind::Aggregation: return "Aggregation";
    case TxKind::GlobalUpdate: return "GlobalUpdate";
    case TxKind::KeyEvent: return "KeyEvent";
  }
  return "?";
}

inline TxKind tx_kind_from_name(const std::string& s) {
  for (TxKind k : {TxKind::DataTransfer, TxKind::ModelForward, TxKind::Aggregation,
                   TxKind::GlobalUpdate, TxKind::KeyEvent}) {
    if (s == tx_kind_name(k)) return k;
  }
  raise(ErrorCode::ParseError, "unknown transaction kind '" + s + "'");
}

struct Transaction {
  TxKind kind = TxKind::KeyEvent;
  std::string sender;
  Hash32 payload_hash{};
  Nonce16 nonce{};
  std::uint64_t sim_time = 0;
  Signature signature{};

  /// Canonical encoding of everything the sender signs.
  Bytes signing_bytes() const {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(kind));
    w.str(sender);
    w.raw(payload_hash);
    w.raw(nonce);
    w.u64(sim_time);
    return w.take();
  }

  Bytes canonical_bytes() const {
    ByteWriter w;
    w.raw(signing_bytes());
    w.raw(signature);
    return w.take();
  }

  Hash32 hash() const { return sha256(canonical_bytes()); }
};

inline Transaction make_transaction(TxKind kind, const std::string& sender,
                                    const Hash32& payload_hash, const Nonce16& nonce,
                                    std::uint64_t sim_time, const SigningKey& key) {
  Transaction tx;
  tx.kind = kind;
  tx.sender = sender;
  tx.payload_hash = payload_hash;
  tx.nonce = nonce;
  tx.sim_time = sim_time;
  tx.signature = key.sign(tx.signing_bytes());
  return tx;
}

struct Block {
  std::uint64_t height = 0;
  Hash32 prev_hash{};
  Hash32 tx_root{};
  std::vector<Transaction> txs;
  Signature sealer_signature{};

  static Hash32 compute_tx_root(const std::vector<Transaction>& txs) {
    ByteWriter w;
    for (const auto& tx : txs) w.raw(tx.hash());
    return sha256(w.take());
  }

  /// What the sealer signs.
  Bytes sealing_bytes() const {
    ByteWriter w;
    w.u64(height);
    w.raw(prev_hash);
    w.raw(tx_root);
    return w.take();
  }

  Bytes canonical_bytes() const {
    ByteWriter w;
    w.u64(height);
    w.raw(prev_hash);
    w.raw(tx_root);
    w.u32(static_cast<std::uint32_t>(txs.size()));
    for (const auto& tx : txs) w.raw(tx.canonical_bytes());
    w.raw(sealer_signature);
    return w.take();
  }

  Hash32 hash() const { return sha256(canonical_bytes()); }
};

enum class SubmitStatus { Accepted, ReplayDetected, BadSignature, UnknownSender };

inline const char* submit_status_name(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Accepted: return "accepted";
    case SubmitStatus::ReplayDetected: return "replay_detected";
    case SubmitStatus::BadSignature: return "bad_signature";
    case SubmitStatus::UnknownSender: return "unknown_sender";
  }
  return "?";
}

struct AuditFault {
  std::uint64_t height = 0;
  std::string reason;  // parse_error, height_mismatch, prev_hash_mismatch,
                       // tx_root_mismatch, bad_tx_signature, bad_sealer_signature,
                       // replayed_nonce, unknown_sender
  std::string detail;
};

struct TxFilter {
  std::optional<TxKind> kind;
  std::optional<std::string> sender;
  std::optional<std::uint64_t> from_height;
  std::optional<std::uint64_t> to_height;  // inclusive
};

/// Single-sealer proof-of-authority chain. Nodes are registered with their
/// verification keys; a genesis block (no transactions) anchors the chain.
class Ledger {
 public:
  explicit Ledger(const Key32& sealer_seed) : sealer_(SigningKey::from_seed(sealer_seed)) {
    Block genesis;
    genesis.height = 0;
    genesis.prev_hash.fill(0);
    genesis.tx_root = Block::compute_tx_root({});
    genesis.sealer_signature = sealer_.sign(genesis.sealing_bytes());
    chain_.push_back(std::move(genesis));
  }

  void register_node(const std::string& id, const VerifyKey& pk) {
    if (id.empty()) raise(ErrorCode::InvalidParameter, "empty node id");
    nodes_[id] = pk;
  }

  const std::map<std::string, VerifyKey>& nodes() const { return nodes_; }
  VerifyKey sealer_public_key() const { return sealer_.public_key; }
  const std::vector<Block>& chain() const { return chain_; }
  std::size_t pending_count() const { return pending_.size(); }

  bool check_replay(const std::string& sender, const Nonce16& nonce) const {
    return nonce_registry_.count({sender, nonce}) > 0;
  }

  SubmitStatus submit(const Transaction& tx) {
    auto node = nodes_.find(tx.sender);
    if (node == nodes_.end()) return SubmitStatus::UnknownSender;
    if (!signature_valid(node->second, tx.signing_bytes(), tx.signature)) {
      return SubmitStatus::BadSignature;
    }
    if (check_replay(tx.sender, tx.nonce)) return SubmitStatus::ReplayDetected;
    nonce_registry_.insert({tx.sender, tx.nonce});  // pending counts as seen
    pending_.push_back(tx);
    return SubmitStatus::Accepted;
  }

  const Block& seal_block() {
    if (pending_.empty()) raise(ErrorCode::EmptyPool, "no pending transactions to seal");
    std::stable_sort(pending_.begin(), pending_.end(), [](const Transaction& a, const Transaction& b) {
      return std::tie(a.sim_time, a.sender, a.nonce) < std::tie(b.sim_time, b.sender, b.nonce);
    });
    Block b;
    b.height = chain_.size();
    b.prev_hash = chain_.back().hash();
    b.txs = std::move(pending_);
    pending_.clear();
    b.tx_root = Block::compute_tx_root(b.txs);
    b.sealer_signature = sealer_.sign(b.sealing_bytes());
    chain_.push_back(std::move(b));
    return chain_.back();
  }

  std::vector<Transaction> query(const TxFilter& f = {}) const {
    std::vector<Transaction> out;
    for (const auto& b : chain_) {
      if (f.from_height && b.height < *f.from_height) continue;
      if (f.to_height && b.height > *f.to_height) continue;
      for (const auto& tx : b.txs) {
        if (f.kind && tx.kind != *f.kind) continue;
        if (f.sender && tx.sender != *f.sender) continue;
        out.push_back(tx);
      }
    }
    return out;
  }

  /// Full re-verification of the in-memory chain; first fault wins.
  std::optional<AuditFault> verify_chain() const {
    return verify_blocks(chain_, nodes_, sealer_.public_key);
  }

  // -------------------------------------------------------------------------
  // JSON-lines export: line 0 is a header with the key material, line k holds
  // block k-1. All hashes lowercase hex; every line newline-terminated.

  std::string export_jsonl() const {
    nlohmann::ordered_json header;
    header["format"] = "fldabe-ledger-v1";
    header["sealer_pk"] = to_hex(sealer_.public_key);
    nlohmann::ordered_json nodes = nlohmann::ordered_json::object();
    for (const auto& [id, pk] : nodes_) nodes[id] = to_hex(pk);
    header["nodes"] = nodes;

    std::string out = header.dump();
    out.push_back('\n');
    for (const auto& b : chain_) {
      out += block_to_json(b).dump();
      out.push_back('\n');
    }
    return out;
  }

  static nlohmann::ordered_json block_to_json(const Block& b) {
    nlohmann::ordered_json j;
    j["height"] = b.height;
    j["prev_hash"] = to_hex(b.prev_hash);
    j["tx_root"] = to_hex(b.tx_root);
    nlohmann::ordered_json txs = nlohmann::ordered_json::array();
    for (const auto& tx : b.txs) {
      nlohmann::ordered_json tj;
      tj["kind"] = tx_kind_name(tx.kind);
      tj["sender"] = tx.sender;
      tj["payload_hash"] = to_hex(tx.payload_hash);
      tj["nonce"] = to_hex(tx.nonce);
      tj["sim_time"] = tx.sim_time;
      tj["signature"] = to_hex(tx.signature);
      txs.push_back(std::move(tj));
    }
    j["txs"] = txs;
    j["sealer_signature"] = to_hex(b.sealer_signature);
    return j;
  }

  static Block block_from_json(const nlohmann::json& j) {
    Block b;
    b.height = j.at("height").get<std::uint64_t>();
    b.prev_hash = from_hex_array<32>(j.at("prev_hash").get<std::string>());
    b.tx_root = from_hex_array<32>(j.at("tx_root").get<std::string>());
    for (const auto& tj : j.at("txs")) {
      Transaction tx;
      tx.kind = tx_kind_from_name(tj.at("kind").get<std::string>());
      tx.sender = tj.at("sender").get<std::string>();
      tx.payload_hash = from_hex_array<32>(tj.at("payload_hash").get<std::string>());
      tx.nonce = from_hex_array<16>(tj.at("nonce").get<std::string>());
      tx.sim_time = tj.at("sim_time").get<std::uint64_t>();
      tx.signature = from_hex_array<64>(tj.at("signature").get<std::string>());
      b.txs.push_back(std::move(tx));
    }
    b.sealer_signature = from_hex_array<64>(j.at("sealer_signature").get<std::string>());
    return b;
  }

  /// Shared verification core for in-memory chains and parsed exports.
  static std::optional<AuditFault> verify_blocks(const std::vector<Block>& blocks,
                                                 const std::map<std::string, VerifyKey>& nodes,
                                                 const VerifyKey& sealer_pk) {
    std::set<std::pair<std::string, Nonce16>> seen;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Block& b = blocks[i];
      const std::uint64_t h = i;
      if (b.height != h) {
        return AuditFault{h, "height_mismatch",
                          "claims height " + std::to_string(b.height)};
      }
      Hash32 want_prev{};
      if (i > 0) want_prev = blocks[i - 1].hash();
      if (b.prev_hash != want_prev) return AuditFault{h, "prev_hash_mismatch", ""};
      for (const auto& tx : b.txs) {
        auto node = nodes.find(tx.sender);
        if (node == nodes.end()) {
          return AuditFault{h, "unknown_sender", "sender '" + tx.sender + "'"};
        }
        if (!signature_valid(node->second, tx.signing_bytes(), tx.signature)) {
          return AuditFault{h, "bad_tx_signature", "sender '" + tx.sender + "'"};
        }
        if (!seen.insert({tx.sender, tx.nonce}).second) {
          return AuditFault{h, "replayed_nonce", "sender '" + tx.sender + "'"};
        }
      }
      if (Block::compute_tx_root(b.txs) != b.tx_root) return AuditFault{h, "tx_root_mismatch", ""};
      if (!signature_valid(sealer_pk, b.sealing_bytes(), b.sealer_signature)) {
        return AuditFault{h, "bad_sealer_signature", ""};
      }
    }
    return std::nullopt;
  }

 private:
  SigningKey sealer_;
  std::map<std::string, VerifyKey> nodes_;
  std::vector<Block> chain_;
  std::vector<Transaction> pending_;
  std::set<std::pair<std::string, Nonce16>> nonce_registry_;
};

// ---------------------------------------------------------------------------
// Offline audit of an exported chain. File-level damage (missing header,
// missing trailing newline) raises ParseError; line-level damage is reported
// as a fault at that line's chain position (line k holds block k-1), so a
// mutated block is always attributed to its true height even if its JSON no
// longer parses.

struct AuditReport {
  bool ok = false;
  std::uint64_t blocks = 0;
  std::uint64_t transactions = 0;
  std::map<std::string, std::uint64_t> tx_kind_counts;
  std::optional<AuditFault> fault;
};

inline AuditReport audit_chain_text(const std::string& content) {
  if (content.empty()) raise(ErrorCode::ParseError, "empty chain file");
  if (content.back() != '\n') raise(ErrorCode::ParseError, "truncated chain file (no final newline)");

  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (content[i] == '\n') {
      lines.push_back(content.substr(start, i - start));
      start = i + 1;
    }
  }
  if (lines.empty()) raise(ErrorCode::ParseError, "chain file has no header line");

  VerifyKey sealer_pk{};
  std::map<std::string, VerifyKey> nodes;
  try {
    nlohmann::json header = nlohmann::json::parse(lines[0]);
    if (header.at("format").get<std::string>() != "fldabe-ledger-v1") {
      raise(ErrorCode::ParseError, "unknown chain format");
    }
    sealer_pk = from_hex_array<32>(header.at("sealer_pk").get<std::string>());
    for (const auto& [id, pk] : header.at("nodes").items()) {
      nodes[id] = from_hex_array<32>(pk.get<std::string>());
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(ErrorCode::ParseError, std::string("bad chain header: ") + e.what());
  }

  AuditReport report;
  std::vector<Block> blocks;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::uint64_t height = li - 1;
    try {
      blocks.push_back(Ledger::block_from_json(nlohmann::json::parse(lines[li])));
    } catch (const std::exception& e) {
      report.fault = AuditFault{height, "parse_error", e.what()};
      report.blocks = height;
      return report;
    }
  }
  report.blocks = blocks.size();

  report.fault = Ledger::verify_blocks(blocks, nodes, sealer_pk);
  if (!report.fault) {
    report.ok = true;
    for (const auto& b : blocks) {
      report.transactions += b.txs.size();
      for (const auto& tx : b.txs) ++report.tx_kind_counts[tx_kind_name(tx.kind)];
    }
  }
  return report;
}

}  // namespace fldabe::ledger
