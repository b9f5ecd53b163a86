#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fldabe/common.hpp"

namespace fldabe::ban {

inline constexpr int kMaxStatementDepth = 8;
inline constexpr int kMaxClosureIterations = 10000;

enum class StKind { Atom, Believes, Sees, Said, Controls, Fresh, SharedKey, Encrypted, Conj };

/// Belief-logic statements in canonical form. SharedKey principals are kept
/// sorted so the relation is symmetric by construction.
struct Statement {
  StKind kind = StKind::Atom;
  std::string label;            // atom text, principal, or key name
  std::vector<Statement> kids;

  static Statement atom(std::string a) { return {StKind::Atom, std::move(a), {}}; }
  static Statement believes(std::string p, Statement s) {
    return {StKind::Believes, std::move(p), {std::move(s)}};
  }
  static Statement sees(std::string p, Statement s) {
    return {StKind::Sees, std::move(p), {std::move(s)}};
  }
  static Statement said(std::string p, Statement s) {
    return {StKind::Said, std::move(p), {std::move(s)}};
  }
  static Statement controls(std::string p, Statement s) {
    return {StKind::Controls, std::move(p), {std::move(s)}};
  }
  static Statement fresh(Statement s) { return {StKind::Fresh, "", {std::move(s)}}; }
  static Statement shared_key(std::string key, std::string p, std::string q) {
    if (q < p) std::swap(p, q);
    return {StKind::SharedKey, std::move(key), {atom(std::move(p)), atom(std::move(q))}};
  }
  static Statement encrypted(std::string key, Statement s) {
    return {StKind::Encrypted, std::move(key), {std::move(s)}};
  }
  static Statement conj(Statement a, Statement b) {
    return {StKind::Conj, "", {std::move(a), std::move(b)}};
  }

  int depth() const {
    int d = 0;
    for (const auto& k : kids) d = std::max(d, k.depth());
    return d + 1;
  }

  std::string text() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  void write(std::ostringstream& os) const {
    switch (kind) {
      case StKind::Atom:
        os << label;
        return;
      case StKind::Believes:
        os << "believes " << label << ' ';
        kids[0].write(os);
        return;
      case StKind::Sees:
        os << "sees " << label << ' ';
        kids[0].write(os);
        return;
      case StKind::Said:
        os << "said " << label << ' ';
        kids[0].write(os);
        return;
      case StKind::Controls:
        os << "controls " << label << ' ';
        kids[0].write(os);
        return;
      case StKind::Fresh:
        os << "fresh ";
        kids[0].write(os);
        return;
      case StKind::SharedKey:
        os << "sharedkey " << label << ' ' << kids[0].label << ' ' << kids[1].label;
        return;
      case StKind::Encrypted:
        os << "encrypted " << label << ' ';
        kids[0].write(os);
        return;
      case StKind::Conj:
        os << "and ";
        kids[0].write(os);
        os << ' ';
        kids[1].write(os);
        return;
    }
  }

  friend bool operator==(const Statement& a, const Statement& b) { return a.text() == b.text(); }
};

// ---------------------------------------------------------------------------
// Prefix-syntax parser, one statement per line:
//   believes D sharedkey K_DF D F
//   sees C encrypted HE aggregated-model
//   fresh nonce-1, and <s> <t>, controls B transactions, ...

namespace detail {

inline bool is_keyword(const std::string& t) {
  return t == "believes" || t == "sees" || t == "said" || t == "controls" || t == "fresh" ||
         t == "sharedkey" || t == "encrypted" || t == "and";
}

struct StatementParser {
  const std::vector<std::string>& toks;
  std::size_t pos = 0;

  std::string next(const char* what) {
    if (pos >= toks.size()) {
      raise(ErrorCode::ParseError, std::string("expected ") + what + ", got end of statement");
    }
    return toks[pos++];
  }

  std::string next_name(const char* what) {
    std::string t = next(what);
    if (is_keyword(t)) {
      raise(ErrorCode::ParseError, std::string("expected ") + what + ", got keyword '" + t + "'");
    }
    return t;
  }

  Statement parse() {
    std::string t = next("statement");
    // The principal must be taken before the recursive descent; argument
    // evaluation order would otherwise be unspecified.
    if (t == "believes") {
      std::string p = next_name("principal");
      return Statement::believes(p, parse());
    }
    if (t == "sees") {
      std::string p = next_name("principal");
      return Statement::sees(p, parse());
    }
    if (t == "said") {
      std::string p = next_name("principal");
      return Statement::said(p, parse());
    }
    if (t == "controls") {
      std::string p = next_name("principal");
      return Statement::controls(p, parse());
    }
    if (t == "fresh") return Statement::fresh(parse());
    if (t == "sharedkey") {
      std::string k = next_name("key name");
      std::string p = next_name("principal");
      std::string q = next_name("principal");
      return Statement::shared_key(k, p, q);
    }
    if (t == "encrypted") {
      std::string k = next_name("key name");
      return Statement::encrypted(k, parse());
    }
    if (t == "and") {
      Statement a = parse();
      return Statement::conj(std::move(a), parse());
    }
    return Statement::atom(t);
  }
};

}  // namespace detail

inline Statement parse_statement(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  if (toks.empty()) raise(ErrorCode::ParseError, "empty statement");
  detail::StatementParser p{toks, 0};
  Statement s = p.parse();
  if (p.pos != toks.size()) {
    raise(ErrorCode::ParseError, "trailing tokens after statement: '" + toks[p.pos] + "'");
  }
  if (s.depth() > kMaxStatementDepth) raise(ErrorCode::ParseError, "statement deeper than 8");
  return s;
}

/// Parses a theory file: one statement per line, '#' comments, blank lines
/// ignored. Parse errors carry 1-based line numbers.
inline std::vector<Statement> parse_theory(const std::string& content) {
  std::vector<Statement> out;
  std::istringstream is(content);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    }
    if (blank) continue;
    try {
      out.push_back(parse_statement(line));
    } catch (const Error& e) {
      raise(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Knowledge base with forward chaining.
//
// Rules:
//   R0 key-mutuality     Believes(P, SharedKey(K,P,Q)) |- Believes(Q, SharedKey(K,P,Q))
//   R1 message-meaning   Believes(P, SharedKey(K,P,Q)), Sees(P, Encrypted(S,K)) |- Believes(P, Said(Q,S))
//   R2 nonce-verification Believes(P, Fresh(S)), Believes(P, Said(Q,S)) |- Believes(P, Believes(Q,S))
//   R3 jurisdiction      Believes(P, Controls(Q,S)), Believes(P, Believes(Q,S)) |- Believes(P,S)
//   R4 decomposition     Sees(P, Conj(S,T)) |- Sees(P,S), Sees(P,T)
//
// R0 reads both endpoints' trust in a shared key off either endpoint's
// statement of it; without it no receiver-side beliefs exist and R1 can never
// fire for the receiving principal.

struct Derivation {
  std::string rule;  // "axiom" or R0..R4
  std::vector<std::string> premises;
  std::string conclusion;
};

struct GoalResult {
  bool derivable = false;
  std::vector<Derivation> trace;       // topological, axioms first
  std::vector<std::string> frontier;   // missing leaf facts when underivable
};

class KnowledgeBase {
 public:
  bool add_axiom(const Statement& s) { return add(s, {"axiom", {}, s.text()}); }

  bool contains(const Statement& s) const { return facts_.count(s.text()) > 0; }
  std::size_t size() const { return order_.size(); }

  std::vector<Statement> facts() const {
    std::vector<Statement> out;
    for (const auto& key : order_) out.push_back(facts_.at(key));
    return out;
  }

  std::set<std::string> fact_texts() const {
    return std::set<std::string>(order_.begin(), order_.end());
  }

  const std::vector<Derivation>& trace() const { return trace_; }

  std::set<std::string> principals() const {
    std::set<std::string> out;
    for (const auto& key : order_) collect_principals(facts_.at(key), out);
    return out;
  }

  std::set<std::string> key_names() const {
    std::set<std::string> out;
    for (const auto& key : order_) collect_keys(facts_.at(key), out);
    return out;
  }

  /// Forward chaining to a fixed point.
  void derive_closure() {
    for (int iter = 0; iter < kMaxClosureIterations; ++iter) {
      if (!run_pass()) return;
    }
    raise(ErrorCode::InvalidParameter, "closure did not stabilize within iteration bound");
  }

  GoalResult check_goal(const Statement& goal) const {
    GoalResult r;
    if (contains(goal)) {
      r.derivable = true;
      std::set<std::string> done;
      build_trace(goal.text(), done, r.trace);
      return r;
    }
    std::set<std::string> missing;
    std::set<std::string> visited;
    frontier_search(goal, 4, visited, missing);
    r.frontier.assign(missing.begin(), missing.end());
    return r;
  }

 private:
  std::map<std::string, Statement> facts_;
  std::vector<std::string> order_;
  std::map<std::string, Derivation> provenance_;  // first derivation per fact
  std::vector<Derivation> trace_;

  bool add(const Statement& s, Derivation d) {
    if (s.depth() > kMaxStatementDepth) return false;
    auto [it, inserted] = facts_.emplace(s.text(), s);
    if (!inserted) return false;
    order_.push_back(it->first);
    d.conclusion = it->first;
    provenance_[it->first] = d;
    trace_.push_back(std::move(d));
    return true;
  }

  static void collect_principals(const Statement& s, std::set<std::string>& out) {
    switch (s.kind) {
      case StKind::Believes:
      case StKind::Sees:
      case StKind::Said:
      case StKind::Controls:
        out.insert(s.label);
        break;
      case StKind::SharedKey:
        out.insert(s.kids[0].label);
        out.insert(s.kids[1].label);
        return;
      default:
        break;
    }
    for (const auto& k : s.kids) collect_principals(k, out);
  }

  static void collect_keys(const Statement& s, std::set<std::string>& out) {
    if (s.kind == StKind::SharedKey || s.kind == StKind::Encrypted) out.insert(s.label);
    for (const auto& k : s.kids) collect_keys(k, out);
  }

  // One full pass over the current facts; returns whether anything was added.
  bool run_pass() {
    bool changed = false;
    std::vector<std::string> snapshot = order_;
    for (const auto& key : snapshot) {
      const Statement f = facts_.at(key);

      if (f.kind == StKind::Believes && f.kids[0].kind == StKind::SharedKey) {
        const Statement& sk = f.kids[0];
        const std::string& p = f.label;
        std::string other;
        if (sk.kids[0].label == p) {
          other = sk.kids[1].label;
        } else if (sk.kids[1].label == p) {
          other = sk.kids[0].label;
        }
        if (!other.empty()) {
          // R0
          changed |= add(Statement::believes(other, sk), {"R0", {key}, ""});
          // R1 against every matching Sees(P, Encrypted(S, K))
          for (const auto& key2 : snapshot) {
            const Statement& g = facts_.at(key2);
            if (g.kind == StKind::Sees && g.label == p && g.kids[0].kind == StKind::Encrypted &&
                g.kids[0].label == sk.label) {
              changed |= add(Statement::believes(p, Statement::said(other, g.kids[0].kids[0])),
                             {"R1", {key, key2}, ""});
            }
          }
        }
      }

      if (f.kind == StKind::Believes && f.kids[0].kind == StKind::Fresh) {
        const std::string& p = f.label;
        const Statement& s = f.kids[0].kids[0];
        // R2 against every Believes(P, Said(Q, S))
        for (const auto& key2 : snapshot) {
          const Statement& g = facts_.at(key2);
          if (g.kind == StKind::Believes && g.label == p && g.kids[0].kind == StKind::Said &&
              g.kids[0].kids[0] == s) {
            changed |= add(
                Statement::believes(p, Statement::believes(g.kids[0].label, s)),
                {"R2", {key, key2}, ""});
          }
        }
      }

      if (f.kind == StKind::Believes && f.kids[0].kind == StKind::Controls) {
        const std::string& p = f.label;
        const std::string& q = f.kids[0].label;
        const Statement& s = f.kids[0].kids[0];
        Statement premise = Statement::believes(p, Statement::believes(q, s));
        if (contains(premise)) {
          changed |= add(Statement::believes(p, s), {"R3", {key, premise.text()}, ""});
        }
      }

      if (f.kind == StKind::Sees && f.kids[0].kind == StKind::Conj) {
        changed |= add(Statement::sees(f.label, f.kids[0].kids[0]), {"R4", {key}, ""});
        changed |= add(Statement::sees(f.label, f.kids[0].kids[1]), {"R4", {key}, ""});
      }
    }
    return changed;
  }

  void build_trace(const std::string& fact, std::set<std::string>& done,
                   std::vector<Derivation>& out) const {
    if (!done.insert(fact).second) return;
    auto it = provenance_.find(fact);
    if (it == provenance_.end()) return;
    for (const auto& prem : it->second.premises) build_trace(prem, done, out);
    Derivation d = it->second;
    d.conclusion = fact;
    out.push_back(std::move(d));
  }

  // Bounded backward search for underivable goals: expands the natural
  // deriving rule for each statement shape and reports the leaf premises that
  // are absent from the closure. Diagnostic only — not a completeness proof.
  void frontier_search(const Statement& goal, int depth, std::set<std::string>& visited,
                       std::set<std::string>& missing) const {
    if (contains(goal)) return;
    if (!visited.insert(goal.text()).second) return;
    if (depth == 0) {
      missing.insert(goal.text());
      return;
    }

    if (goal.kind == StKind::Believes) {
      const std::string& p = goal.label;
      const Statement& inner = goal.kids[0];

      if (inner.kind == StKind::Believes) {  // R2
        frontier_search(Statement::believes(p, Statement::fresh(inner.kids[0])), depth - 1,
                        visited, missing);
        frontier_search(Statement::believes(p, Statement::said(inner.label, inner.kids[0])),
                        depth - 1, visited, missing);
        return;
      }
      if (inner.kind == StKind::Said) {  // R1 over every known key
        for (const auto& k : key_names()) {
          frontier_search(Statement::believes(p, Statement::shared_key(k, p, inner.label)),
                          depth - 1, visited, missing);
          frontier_search(Statement::sees(p, Statement::encrypted(k, inner.kids[0])), depth - 1,
                          visited, missing);
        }
        return;
      }
      if (inner.kind == StKind::SharedKey) {  // R0 from the other endpoint
        const std::string& a = inner.kids[0].label;
        const std::string& b = inner.kids[1].label;
        if (p == a || p == b) {
          frontier_search(Statement::believes(p == a ? b : a, inner), depth - 1, visited, missing);
          return;
        }
        missing.insert(goal.text());
        return;
      }
      if (inner.kind != StKind::Controls && inner.kind != StKind::Fresh) {  // R3 over principals
        for (const auto& q : principals()) {
          if (q == p) continue;
          frontier_search(Statement::believes(p, Statement::controls(q, inner)), depth - 1,
                          visited, missing);
          frontier_search(Statement::believes(p, Statement::believes(q, inner)), depth - 1,
                          visited, missing);
        }
        return;
      }
    }
    // Sees / Fresh / Controls facts only enter as postulates, so a missing one
    // is itself the frontier.
    missing.insert(goal.text());
  }
};

// ---------------------------------------------------------------------------
// The shipped theory. Key labels follow the protocol as built: M->C traffic is
// homomorphically encrypted (key label HE) and the global update travels under
// the cloud-device session key K_CD.

inline std::vector<Statement> standard_axioms() {
  using S = Statement;
  std::vector<Statement> out;
  // Channel-key trust, one statement per protocol hop.
  out.push_back(S::believes("D", S::shared_key("K_DF", "D", "F")));
  out.push_back(S::believes("F", S::shared_key("K_FM", "F", "M")));
  out.push_back(S::believes("M", S::shared_key("HE", "M", "C")));
  out.push_back(S::believes("C", S::shared_key("K_CD", "C", "D")));
  // Every participant trusts the ledger's jurisdiction over transactions.
  for (const char* p : {"D", "F", "M", "C"}) {
    out.push_back(S::believes(p, S::controls("B", S::atom("transactions"))));
  }
  // Scheme-soundness beliefs.
  out.push_back(S::believes("D", S::atom("dabe-secure")));
  out.push_back(S::believes("F", S::atom("dabe-secure")));
  out.push_back(S::believes("M", S::atom("he-smpc-secure")));
  out.push_back(S::believes("C", S::atom("he-secure")));
  out.push_back(S::believes("B", S::atom("he-smpc-secure")));
  // Fog trusts the microservices' aggregation duty.
  out.push_back(S::believes("F", S::controls("M", S::atom("aggregation-and-computation"))));
  return out;
}

inline std::vector<Statement> standard_messages() {
  using S = Statement;
  std::vector<Statement> out;
  out.push_back(S::sees("F", S::encrypted("K_DF", S::atom("data"))));
  out.push_back(S::sees("M", S::encrypted("K_FM", S::atom("local-model"))));
  out.push_back(S::sees("C", S::encrypted("HE", S::atom("aggregated-model"))));
  out.push_back(S::sees("D", S::encrypted("K_CD", S::atom("global-model-update"))));
  // Receivers check the ledgered nonces, so each payload is believed fresh.
  out.push_back(S::believes("F", S::fresh(S::atom("data"))));
  out.push_back(S::believes("M", S::fresh(S::atom("local-model"))));
  out.push_back(S::believes("C", S::fresh(S::atom("aggregated-model"))));
  out.push_back(S::believes("D", S::fresh(S::atom("global-model-update"))));
  return out;
}

inline std::vector<Statement> standard_theory() {
  std::vector<Statement> out = standard_axioms();
  for (auto& s : standard_messages()) out.push_back(std::move(s));
  return out;
}

/// The authentication goals the shipped theory must reach. The last one is the
/// ledger-jurisdiction goal; the first four are the per-hop authenticity
/// conclusions.
inline std::vector<Statement> standard_goals() {
  using S = Statement;
  return {
      S::believes("F", S::believes("D", S::atom("data"))),
      S::believes("M", S::believes("F", S::atom("local-model"))),
      S::believes("C", S::believes("M", S::atom("aggregated-model"))),
      S::believes("D", S::believes("C", S::atom("global-model-update"))),
      S::believes("C", S::controls("B", S::atom("transactions"))),
  };
}

inline KnowledgeBase closure_of(const std::vector<Statement>& theory) {
  KnowledgeBase kb;
  for (const auto& s : theory) kb.add_axiom(s);
  kb.derive_closure();
  return kb;
}

}  // namespace fldabe::ban
