#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fldabe/common.hpp"
#include "fldabe/crypto.hpp"
#include "fldabe/gf128.hpp"

namespace fldabe::dabe {

struct Attribute {
  std::string authority_id;
  std::string name;

  auto operator<=>(const Attribute&) const = default;
};

inline void validate_attribute_name(const std::string& name) {
  if (name.empty()) raise(ErrorCode::InvalidParameter, "attribute name is empty");
  for (char c : name) {
    if (!(c > 0x20 && c < 0x7f)) {
      raise(ErrorCode::InvalidParameter, "attribute name must be printable ASCII without whitespace");
    }
  }
}

// ---------------------------------------------------------------------------
// Access policies: AND / OR / THRESHOLD(k) / LEAF trees, depth-capped.

inline constexpr int kMaxPolicyDepth = 16;

struct AccessPolicy {
  enum class Kind { And, Or, Threshold, Leaf };

  Kind kind = Kind::Leaf;
  unsigned threshold_k = 0;          // Threshold nodes only
  std::vector<AccessPolicy> children;
  Attribute attribute;               // Leaf nodes only

  static AccessPolicy leaf(Attribute a) {
    AccessPolicy p;
    p.kind = Kind::Leaf;
    p.attribute = std::move(a);
    return p;
  }
  static AccessPolicy all_of(std::vector<AccessPolicy> kids) {
    AccessPolicy p;
    p.kind = Kind::And;
    p.children = std::move(kids);
    return p;
  }
  static AccessPolicy any_of(std::vector<AccessPolicy> kids) {
    AccessPolicy p;
    p.kind = Kind::Or;
    p.children = std::move(kids);
    return p;
  }
  static AccessPolicy k_of(unsigned k, std::vector<AccessPolicy> kids) {
    AccessPolicy p;
    p.kind = Kind::Threshold;
    p.threshold_k = k;
    p.children = std::move(kids);
    return p;
  }

  int depth() const {
    int d = 1;
    for (const auto& c : children) d = std::max(d, 1 + c.depth());
    return d;
  }

  std::size_t leaf_count() const {
    if (kind == Kind::Leaf) return 1;
    std::size_t n = 0;
    for (const auto& c : children) n += c.leaf_count();
    return n;
  }

  void collect_leaves(std::vector<const Attribute*>& out) const {
    if (kind == Kind::Leaf) {
      out.push_back(&attribute);
      return;
    }
    for (const auto& c : children) c.collect_leaves(out);
  }

  /// Leaves in depth-first order; index positions match ciphertext shares.
  std::vector<const Attribute*> leaves() const {
    std::vector<const Attribute*> out;
    collect_leaves(out);
    return out;
  }

  void validate() const {
    if (depth() > kMaxPolicyDepth) raise(ErrorCode::InvalidParameter, "policy deeper than 16");
    validate_rec();
  }

  void encode(ByteWriter& w) const {
    w.u8(static_cast<std::uint8_t>(kind));
    switch (kind) {
      case Kind::Leaf:
        w.str(attribute.authority_id);
        w.str(attribute.name);
        break;
      case Kind::Threshold:
        w.u16(static_cast<std::uint16_t>(threshold_k));
        [[fallthrough]];
      case Kind::And:
      case Kind::Or:
        w.u16(static_cast<std::uint16_t>(children.size()));
        for (const auto& c : children) c.encode(w);
        break;
    }
  }

  static AccessPolicy decode(ByteReader& r) {
    AccessPolicy p;
    p.kind = static_cast<Kind>(r.u8());
    switch (p.kind) {
      case Kind::Leaf:
        p.attribute.authority_id = r.str();
        p.attribute.name = r.str();
        break;
      case Kind::Threshold:
        p.threshold_k = r.u16();
        [[fallthrough]];
      case Kind::And:
      case Kind::Or: {
        std::uint16_t n = r.u16();
        p.children.reserve(n);
        for (std::uint16_t i = 0; i < n; ++i) p.children.push_back(decode(r));
        break;
      }
      default:
        raise(ErrorCode::ParseError, "bad policy node tag");
    }
    return p;
  }

  std::string text() const {
    switch (kind) {
      case Kind::Leaf:
        return attribute.name;
      case Kind::And:
      case Kind::Or: {
        std::string out = "(";
        for (std::size_t i = 0; i < children.size(); ++i) {
          if (i > 0) out += kind == Kind::And ? " AND " : " OR ";
          out += children[i].text();
        }
        return out + ")";
      }
      case Kind::Threshold: {
        std::string out = std::to_string(threshold_k) + " OF (";
        for (std::size_t i = 0; i < children.size(); ++i) {
          if (i > 0) out += ", ";
          out += children[i].text();
        }
        return out + ")";
      }
    }
    return "?";
  }

 private:
  void validate_rec() const {
    switch (kind) {
      case Kind::Leaf:
        validate_attribute_name(attribute.name);
        return;
      case Kind::Threshold:
        if (threshold_k < 1 || threshold_k > children.size()) {
          raise(ErrorCode::InvalidParameter, "threshold k out of range");
        }
        break;
      case Kind::And:
      case Kind::Or:
        break;
    }
    if (children.empty()) raise(ErrorCode::InvalidParameter, "gate node without children");
    for (const auto& c : children) c.validate_rec();
  }
};

inline bool policy_satisfied(const AccessPolicy& p, const std::set<Attribute>& attrs) {
  switch (p.kind) {
    case AccessPolicy::Kind::Leaf:
      return attrs.count(p.attribute) > 0;
    case AccessPolicy::Kind::And:
      return std::all_of(p.children.begin(), p.children.end(),
                         [&](const AccessPolicy& c) { return policy_satisfied(c, attrs); });
    case AccessPolicy::Kind::Or:
      return std::any_of(p.children.begin(), p.children.end(),
                         [&](const AccessPolicy& c) { return policy_satisfied(c, attrs); });
    case AccessPolicy::Kind::Threshold: {
      unsigned hits = 0;
      for (const auto& c : p.children) {
        if (policy_satisfied(c, attrs)) ++hits;
      }
      return hits >= p.threshold_k;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Policy text: `fog AND (region-1 OR region-2)`, `2 OF (a, b, c)`.
// Attribute names are bound to their governing authority by the resolver.

namespace detail {

struct PolicyParser {
  std::string_view text;
  std::size_t pos = 0;
  const std::function<Attribute(const std::string&)>& resolve;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos == text.size();
  }

  std::string peek_word() {
    skip_ws();
    std::size_t p = pos;
    std::string w;
    while (p < text.size()) {
      char c = text[p];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
        w.push_back(c);
        ++p;
      } else {
        break;
      }
    }
    return w;
  }

  std::string take_word() {
    std::string w = peek_word();
    if (w.empty()) raise(ErrorCode::ParseError, "expected attribute name in policy at offset " + std::to_string(pos));
    pos += w.size();
    return w;
  }

  bool take_char(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  static bool is_keyword(const std::string& w) {
    std::string u = upper(w);
    return u == "AND" || u == "OR" || u == "OF";
  }

  static std::string upper(std::string w) {
    for (char& c : w) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return w;
  }

  AccessPolicy parse() {
    AccessPolicy p = parse_or();
    if (!at_end()) raise(ErrorCode::ParseError, "trailing input in policy at offset " + std::to_string(pos));
    return p;
  }

  AccessPolicy parse_or() {
    std::vector<AccessPolicy> kids;
    kids.push_back(parse_and());
    while (upper(peek_word()) == "OR") {
      take_word();
      kids.push_back(parse_and());
    }
    return kids.size() == 1 ? std::move(kids[0]) : AccessPolicy::any_of(std::move(kids));
  }

  AccessPolicy parse_and() {
    std::vector<AccessPolicy> kids;
    kids.push_back(parse_primary());
    while (upper(peek_word()) == "AND") {
      take_word();
      kids.push_back(parse_primary());
    }
    return kids.size() == 1 ? std::move(kids[0]) : AccessPolicy::all_of(std::move(kids));
  }

  AccessPolicy parse_primary() {
    if (take_char('(')) {
      AccessPolicy inner = parse_or();
      if (!take_char(')')) raise(ErrorCode::ParseError, "missing ')' in policy");
      return inner;
    }
    std::string w = peek_word();
    if (w.empty()) raise(ErrorCode::ParseError, "expected policy term at offset " + std::to_string(pos));
    if (std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      take_word();
      unsigned k = static_cast<unsigned>(std::stoul(w));
      if (upper(peek_word()) != "OF") raise(ErrorCode::ParseError, "expected OF after threshold count");
      take_word();
      if (!take_char('(')) raise(ErrorCode::ParseError, "expected '(' after OF");
      std::vector<AccessPolicy> kids;
      kids.push_back(parse_or());
      while (take_char(',')) kids.push_back(parse_or());
      if (!take_char(')')) raise(ErrorCode::ParseError, "missing ')' after OF list");
      return AccessPolicy::k_of(k, std::move(kids));
    }
    if (is_keyword(w)) raise(ErrorCode::ParseError, "unexpected keyword '" + w + "' in policy");
    take_word();
    return AccessPolicy::leaf(resolve(w));
  }
};

}  // namespace detail

inline AccessPolicy parse_policy(std::string_view text,
                                 const std::function<Attribute(const std::string&)>& resolve) {
  detail::PolicyParser p{text, 0, resolve};
  AccessPolicy out = p.parse();
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Authorities and keyrings.

class AttributeAuthority {
 public:
  /// Deterministic setup: the master secret is PRF(seed, authority_id).
  static AttributeAuthority setup(std::string authority_id, std::set<Attribute> universe,
                                  const Key32& seed) {
    if (universe.empty()) raise(ErrorCode::InvalidParameter, "authority universe is empty");
    for (const auto& a : universe) {
      validate_attribute_name(a.name);
      if (a.authority_id != authority_id) {
        raise(ErrorCode::InvalidParameter, "universe attribute names a different authority");
      }
    }
    AttributeAuthority auth;
    auth.id_ = std::move(authority_id);
    auth.universe_ = std::move(universe);
    auth.master_ = hmac_sha256(seed, auth.id_);
    return auth;
  }

  const std::string& id() const { return id_; }
  const std::set<Attribute>& universe() const { return universe_; }
  bool governs(const Attribute& a) const { return universe_.count(a) > 0; }

  /// Per-(attribute, epoch) key; identical for every gid by construction.
  Key32 attribute_key(const Attribute& a, std::uint64_t epoch) const {
    if (!governs(a)) raise(ErrorCode::ForeignAttribute, a.name + " is outside universe of " + id_);
    ByteWriter w;
    w.str(a.authority_id);
    w.str(a.name);
    w.u64(epoch);
    return hmac_sha256(master_, w.bytes());
  }

  // Exposed for the determinism oracle only; the secret never leaves the type
  // through any other path.
  Hash32 master_secret_digest() const { return sha256(master_.data(), master_.size()); }

 private:
  std::string id_;
  std::set<Attribute> universe_;
  Key32 master_{};
};

struct UserKeyring {
  std::string gid;
  std::uint64_t epoch = 0;
  std::map<Attribute, Key32> keys;

  std::set<Attribute> attributes() const {
    std::set<Attribute> out;
    for (const auto& [a, k] : keys) out.insert(a);
    return out;
  }

  /// Merge a partial keyring from another authority; epochs must agree.
  void merge(const UserKeyring& other) {
    if (!keys.empty() && other.epoch != epoch) {
      raise(ErrorCode::EpochMismatch, "keyring parts from different epochs");
    }
    epoch = other.epoch;
    if (gid.empty()) gid = other.gid;
    for (const auto& [a, k] : other.keys) keys[a] = k;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json keys_j = nlohmann::ordered_json::array();
    for (const auto& [a, k] : keys) {
      keys_j.push_back({{"authority", a.authority_id}, {"name", a.name}, {"key_hex", to_hex(k)}});
    }
    return {{"gid", gid}, {"epoch", epoch}, {"keys", keys_j}};
  }

  static UserKeyring from_json(const nlohmann::json& j) {
    UserKeyring kr;
    kr.gid = j.at("gid").get<std::string>();
    kr.epoch = j.at("epoch").get<std::uint64_t>();
    for (const auto& e : j.at("keys")) {
      Attribute a{e.at("authority").get<std::string>(), e.at("name").get<std::string>()};
      kr.keys[a] = from_hex_array<32>(e.at("key_hex").get<std::string>());
    }
    return kr;
  }
};

inline UserKeyring keygen_user(const AttributeAuthority& auth, const std::string& gid,
                               const std::set<Attribute>& attrs, std::uint64_t epoch) {
  UserKeyring kr;
  kr.gid = gid;
  kr.epoch = epoch;
  for (const auto& a : attrs) kr.keys[a] = auth.attribute_key(a, epoch);
  return kr;
}

/// Registry of authorities. Universes must be name-disjoint so a bare name in
/// policy text resolves to exactly one governing authority.
class AuthorityDirectory {
 public:
  const AttributeAuthority& register_authority(AttributeAuthority auth) {
    for (const auto& a : auth.universe()) {
      if (by_name_.count(a.name) > 0) {
        raise(ErrorCode::UniverseConflict,
              "attribute '" + a.name + "' already governed by " + by_name_.at(a.name));
      }
    }
    if (by_id_.count(auth.id()) > 0) {
      raise(ErrorCode::UniverseConflict, "authority '" + auth.id() + "' already registered");
    }
    for (const auto& a : auth.universe()) by_name_[a.name] = auth.id();
    auto [it, ok] = by_id_.emplace(auth.id(), std::move(auth));
    return it->second;
  }

  const AttributeAuthority& register_authority(const std::string& id, std::set<Attribute> universe,
                                               const Key32& seed) {
    return register_authority(AttributeAuthority::setup(id, std::move(universe), seed));
  }

  const AttributeAuthority* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  const AttributeAuthority* governing(const Attribute& a) const {
    const AttributeAuthority* auth = find(a.authority_id);
    return auth != nullptr && auth->governs(a) ? auth : nullptr;
  }

  /// Resolver for policy text: bare attribute name -> governed Attribute.
  Attribute resolve_name(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) raise(ErrorCode::UnknownAttribute, "no authority governs '" + name + "'");
    return Attribute{it->second, name};
  }

  AccessPolicy parse_policy(std::string_view text) const {
    return dabe::parse_policy(text, [this](const std::string& n) { return resolve_name(n); });
  }

 private:
  std::map<std::string, AttributeAuthority> by_id_;
  std::map<std::string, std::string> by_name_;  // attribute name -> authority id
};

// ---------------------------------------------------------------------------
// Linear secret sharing over the policy tree. The 32-byte DEK is viewed as a
// pair of GF(2^128) elements shared in parallel: AND splits by xor, OR
// duplicates, THRESHOLD(k) uses a degree-(k-1) Shamir polynomial with child
// i evaluated at x = i+1.

namespace detail {

using SharePair = std::array<Gf128, 2>;

inline SharePair random_pair(SeededRng& rng) {
  return {Gf128::from_bytes(rng.array<16>()), Gf128::from_bytes(rng.array<16>())};
}

inline void lsss_share(const AccessPolicy& node, const SharePair& secret, SeededRng& rng,
                       std::vector<SharePair>& out_leaves) {
  switch (node.kind) {
    case AccessPolicy::Kind::Leaf:
      out_leaves.push_back(secret);
      return;
    case AccessPolicy::Kind::Or:
      for (const auto& c : node.children) lsss_share(c, secret, rng, out_leaves);
      return;
    case AccessPolicy::Kind::And: {
      SharePair acc = secret;
      for (std::size_t i = 0; i + 1 < node.children.size(); ++i) {
        SharePair r = random_pair(rng);
        acc = {acc[0] + r[0], acc[1] + r[1]};
        lsss_share(node.children[i], r, rng, out_leaves);
      }
      lsss_share(node.children.back(), acc, rng, out_leaves);
      return;
    }
    case AccessPolicy::Kind::Threshold: {
      // coefficients a_1..a_{k-1}; a_0 is the secret
      std::vector<SharePair> coeff(node.threshold_k - 1);
      for (auto& c : coeff) c = random_pair(rng);
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        Gf128 x = Gf128::from_u64(i + 1);
        SharePair y = secret;
        Gf128 xp = x;
        for (const auto& a : coeff) {
          y = {y[0] + a[0] * xp, y[1] + a[1] * xp};
          xp = xp * x;
        }
        lsss_share(node.children[i], y, rng, out_leaves);
      }
      return;
    }
  }
}

/// Recover the node's secret from opened leaf shares, or nullopt if the
/// attribute set cannot satisfy this subtree.
inline std::optional<SharePair> lsss_recover(
    const AccessPolicy& node, const std::set<Attribute>& attrs,
    const std::map<std::size_t, SharePair>& opened, std::size_t& leaf_cursor) {
  switch (node.kind) {
    case AccessPolicy::Kind::Leaf: {
      std::size_t idx = leaf_cursor++;
      if (attrs.count(node.attribute) == 0) return std::nullopt;
      auto it = opened.find(idx);
      if (it == opened.end()) return std::nullopt;
      return it->second;
    }
    case AccessPolicy::Kind::Or: {
      std::optional<SharePair> got;
      for (const auto& c : node.children) {
        auto r = lsss_recover(c, attrs, opened, leaf_cursor);
        if (r && !got) got = r;  // keep scanning to advance the cursor
      }
      return got;
    }
    case AccessPolicy::Kind::And: {
      SharePair acc{Gf128::zero(), Gf128::zero()};
      bool ok = true;
      for (const auto& c : node.children) {
        auto r = lsss_recover(c, attrs, opened, leaf_cursor);
        if (r) {
          acc = {acc[0] + (*r)[0], acc[1] + (*r)[1]};
        } else {
          ok = false;
        }
      }
      if (!ok) return std::nullopt;
      return acc;
    }
    case AccessPolicy::Kind::Threshold: {
      std::vector<std::pair<Gf128, SharePair>> points;
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        auto r = lsss_recover(node.children[i], attrs, opened, leaf_cursor);
        if (r && points.size() < node.threshold_k) {
          points.emplace_back(Gf128::from_u64(i + 1), *r);
        }
      }
      if (points.size() < node.threshold_k) return std::nullopt;
      // Lagrange interpolation at x = 0.
      SharePair acc{Gf128::zero(), Gf128::zero()};
      for (std::size_t j = 0; j < points.size(); ++j) {
        Gf128 num = Gf128::one();
        Gf128 den = Gf128::one();
        for (std::size_t l = 0; l < points.size(); ++l) {
          if (l == j) continue;
          num = num * points[l].first;
          den = den * (points[l].first + points[j].first);
        }
        Gf128 lambda = num * den.inv();
        acc = {acc[0] + points[j].second[0] * lambda, acc[1] + points[j].second[1] * lambda};
      }
      return acc;
    }
  }
  return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ciphertexts.

struct WrappedShare {
  std::uint32_t leaf_index = 0;
  Bytes nonce;  // 12 bytes
  Bytes blob;   // sealed 32-byte share + tag
};

struct DabeCiphertext {
  AccessPolicy policy;
  std::uint64_t epoch = 0;
  std::vector<WrappedShare> wrapped_shares;
  Bytes payload_nonce;  // 12 bytes
  Bytes payload;        // sealed payload + tag

  /// Associated data binding payload to policy, epoch and every wrap, so a
  /// mutation anywhere in the ciphertext voids the payload tag.
  Bytes header_ad() const {
    ByteWriter w;
    policy.encode(w);
    w.u64(epoch);
    w.u32(static_cast<std::uint32_t>(wrapped_shares.size()));
    for (const auto& ws : wrapped_shares) {
      w.u32(ws.leaf_index);
      w.blob(ws.nonce);
      w.blob(ws.blob);
    }
    return w.take();
  }

  void encode(ByteWriter& w) const {
    policy.encode(w);
    w.u64(epoch);
    w.u32(static_cast<std::uint32_t>(wrapped_shares.size()));
    for (const auto& ws : wrapped_shares) {
      w.u32(ws.leaf_index);
      w.blob(ws.nonce);
      w.blob(ws.blob);
    }
    w.blob(payload_nonce);
    w.blob(payload);
  }

  static DabeCiphertext decode(ByteReader& r) {
    DabeCiphertext ct;
    ct.policy = AccessPolicy::decode(r);
    ct.epoch = r.u64();
    std::uint32_t n = r.u32();
    ct.wrapped_shares.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      WrappedShare ws;
      ws.leaf_index = r.u32();
      ws.nonce = r.blob();
      ws.blob = r.blob();
      ct.wrapped_shares.push_back(std::move(ws));
    }
    ct.payload_nonce = r.blob();
    ct.payload = r.blob();
    return ct;
  }

  Bytes encoded() const {
    ByteWriter w;
    encode(w);
    return w.take();
  }
};

inline Bytes wrap_ad(const AccessPolicy& policy, std::uint64_t epoch, std::uint32_t leaf_index) {
  ByteWriter w;
  w.str("dabe-wrap");
  policy.encode(w);
  w.u64(epoch);
  w.u32(leaf_index);
  return w.take();
}

inline DabeCiphertext dabe_encrypt(const Bytes& payload, const AccessPolicy& policy,
                                   const AuthorityDirectory& dir, std::uint64_t epoch,
                                   SeededRng& rng) {
  policy.validate();
  auto leaves = policy.leaves();
  std::vector<Key32> leaf_keys;
  leaf_keys.reserve(leaves.size());
  for (const Attribute* a : leaves) {
    const AttributeAuthority* auth = dir.governing(*a);
    if (auth == nullptr) {
      raise(ErrorCode::UnknownAttribute, "policy leaf '" + a->name + "' has no registered authority");
    }
    leaf_keys.push_back(auth->attribute_key(*a, epoch));
  }

  DabeCiphertext ct;
  ct.policy = policy;
  ct.epoch = epoch;

  Key32 dek{};
  rng.fill(dek.data(), dek.size());
  detail::SharePair secret = {
      Gf128::from_bytes(*reinterpret_cast<const std::array<std::uint8_t, 16>*>(dek.data())),
      Gf128::from_bytes(*reinterpret_cast<const std::array<std::uint8_t, 16>*>(dek.data() + 16))};

  std::vector<detail::SharePair> shares;
  detail::lsss_share(policy, secret, rng, shares);

  for (std::size_t i = 0; i < shares.size(); ++i) {
    WrappedShare ws;
    ws.leaf_index = static_cast<std::uint32_t>(i);
    ws.nonce = rng.bytes(kAeadNonceLen);
    Bytes plain(32);
    auto lo = shares[i][0].to_bytes();
    auto hi = shares[i][1].to_bytes();
    std::memcpy(plain.data(), lo.data(), 16);
    std::memcpy(plain.data() + 16, hi.data(), 16);
    ws.blob = aead_seal(leaf_keys[i], ws.nonce, plain, wrap_ad(policy, epoch, ws.leaf_index));
    ct.wrapped_shares.push_back(std::move(ws));
  }

  ct.payload_nonce = rng.bytes(kAeadNonceLen);
  ct.payload = aead_seal(dek, ct.payload_nonce, payload, ct.header_ad());
  return ct;
}

inline Bytes dabe_decrypt(const DabeCiphertext& ct, const UserKeyring& keyring) {
  if (keyring.epoch != ct.epoch) {
    raise(ErrorCode::EpochMismatch, "keyring epoch " + std::to_string(keyring.epoch) +
                                        " vs ciphertext epoch " + std::to_string(ct.epoch));
  }
  std::set<Attribute> attrs = keyring.attributes();
  if (!policy_satisfied(ct.policy, attrs)) {
    raise(ErrorCode::PolicyNotSatisfied, "keyring attributes do not satisfy policy " + ct.policy.text());
  }

  auto leaves = ct.policy.leaves();
  if (ct.wrapped_shares.size() != leaves.size()) {
    raise(ErrorCode::AuthenticationFailure, "share count does not match policy leaves");
  }

  // Open every wrap this keyring is entitled to; a bad tag on any of them is
  // treated as tampering.
  std::map<std::size_t, detail::SharePair> opened;
  for (const auto& ws : ct.wrapped_shares) {
    if (ws.leaf_index >= leaves.size()) raise(ErrorCode::AuthenticationFailure, "leaf index out of range");
    const Attribute& attr = *leaves[ws.leaf_index];
    auto key_it = keyring.keys.find(attr);
    if (key_it == keyring.keys.end()) continue;
    auto plain = aead_open(key_it->second, ws.nonce, ws.blob, wrap_ad(ct.policy, ct.epoch, ws.leaf_index));
    if (!plain || plain->size() != 32) {
      raise(ErrorCode::AuthenticationFailure, "wrapped share failed authentication");
    }
    std::array<std::uint8_t, 16> lo{};
    std::array<std::uint8_t, 16> hi{};
    std::memcpy(lo.data(), plain->data(), 16);
    std::memcpy(hi.data(), plain->data() + 16, 16);
    opened[ws.leaf_index] = {Gf128::from_bytes(lo), Gf128::from_bytes(hi)};
  }

  std::size_t cursor = 0;
  auto secret = detail::lsss_recover(ct.policy, attrs, opened, cursor);
  if (!secret) raise(ErrorCode::AuthenticationFailure, "share recovery failed");

  Key32 dek{};
  auto lo = (*secret)[0].to_bytes();
  auto hi = (*secret)[1].to_bytes();
  std::memcpy(dek.data(), lo.data(), 16);
  std::memcpy(dek.data() + 16, hi.data(), 16);

  auto plain = aead_open(dek, ct.payload_nonce, ct.payload, ct.header_ad());
  if (!plain) raise(ErrorCode::AuthenticationFailure, "payload failed authentication");
  return *plain;
}

}  // namespace fldabe::dabe
