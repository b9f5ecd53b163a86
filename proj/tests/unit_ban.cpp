#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "fldabe/banlogic.hpp"

using namespace fldabe;
using ban::KnowledgeBase;
using ban::Statement;
using S = ban::Statement;

// The twelve facts forward chaining must add to the 22 postulates: the
// receiver-side key beliefs, the said-conclusions, and the nested beliefs.
static std::vector<Statement> expected_derived() {
  return {
      S::believes("F", S::shared_key("K_DF", "D", "F")),
      S::believes("M", S::shared_key("K_FM", "F", "M")),
      S::believes("C", S::shared_key("HE", "M", "C")),
      S::believes("D", S::shared_key("K_CD", "C", "D")),
      S::believes("F", S::said("D", S::atom("data"))),
      S::believes("M", S::said("F", S::atom("local-model"))),
      S::believes("C", S::said("M", S::atom("aggregated-model"))),
      S::believes("D", S::said("C", S::atom("global-model-update"))),
      S::believes("F", S::believes("D", S::atom("data"))),
      S::believes("M", S::believes("F", S::atom("local-model"))),
      S::believes("C", S::believes("M", S::atom("aggregated-model"))),
      S::believes("D", S::believes("C", S::atom("global-model-update"))),
  };
}

TEST_CASE("statement text forms are stable and symmetric") {
  CHECK(S::believes("D", S::shared_key("K_DF", "D", "F")).text() ==
        "believes D sharedkey K_DF D F");
  CHECK(S::sees("C", S::encrypted("HE", S::atom("aggregated-model"))).text() ==
        "sees C encrypted HE aggregated-model");
  CHECK(S::believes("F", S::fresh(S::atom("data"))).text() == "believes F fresh data");
  CHECK(S::conj(S::atom("a"), S::atom("b")).text() == "and a b");
  // key sharing is unordered: endpoints are normalized
  CHECK(S::shared_key("K", "F", "D") == S::shared_key("K", "D", "F"));
  CHECK(S::shared_key("HE", "M", "C").text() == "sharedkey HE C M");
}

TEST_CASE("parser round-trips every shipped statement") {
  for (const auto& s : ban::standard_theory()) {
    CHECK(ban::parse_statement(s.text()) == s);
  }
  for (const auto& g : ban::standard_goals()) {
    CHECK(ban::parse_statement(g.text()) == g);
  }
}

TEST_CASE("parser rejects malformed statements") {
  CHECK_THROWS_AS(ban::parse_statement(""), Error);
  CHECK_THROWS_AS(ban::parse_statement("believes"), Error);          // missing principal
  CHECK_THROWS_AS(ban::parse_statement("believes sees x"), Error);   // keyword as name
  CHECK_THROWS_AS(ban::parse_statement("sharedkey K A"), Error);     // missing endpoint
  CHECK_THROWS_AS(ban::parse_statement("believes D x y"), Error);    // trailing tokens
  CHECK_THROWS_AS(ban::parse_statement("and a"), Error);             // conj needs two

  std::string deep = "x";
  for (int i = 0; i < 7; ++i) deep = "believes P " + deep;
  CHECK(ban::parse_statement(deep).depth() == 8);  // at the cap
  CHECK_THROWS_AS(ban::parse_statement("believes P " + deep), Error);

  try {
    ban::parse_theory("believes D x\n\n# comment\nbelieves broken\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK(ban::parse_theory("# only comments\n\n").empty());
  CHECK(ban::parse_theory("believes D x # trailing comment\n").size() == 1);
}

TEST_CASE("closure of the shipped theory is exactly the expected fact set") {
  auto theory = ban::standard_theory();
  REQUIRE(theory.size() == 22);
  KnowledgeBase kb = ban::closure_of(theory);
  CHECK(kb.size() == 34);

  std::set<std::string> expected;
  for (const auto& s : theory) expected.insert(s.text());
  for (const auto& s : expected_derived()) expected.insert(s.text());
  REQUIRE(expected.size() == 34);
  CHECK(kb.fact_texts() == expected);
}

TEST_CASE("all shipped goals are derivable with well-formed traces") {
  KnowledgeBase kb = ban::closure_of(ban::standard_theory());
  auto goals = ban::standard_goals();
  REQUIRE(goals.size() == 5);
  for (const auto& goal : goals) {
    auto r = kb.check_goal(goal);
    CHECK(r.derivable);
    CHECK(r.frontier.empty());
    REQUIRE_FALSE(r.trace.empty());
    CHECK(r.trace.back().conclusion == goal.text());
    // every premise must have been concluded earlier in the trace
    std::set<std::string> shown;
    for (const auto& d : r.trace) {
      bool known_rule = d.rule == "axiom" || d.rule == "R0" || d.rule == "R1" ||
                        d.rule == "R2" || d.rule == "R3" || d.rule == "R4";
      CHECK(known_rule);
      if (d.rule == "axiom") CHECK(d.premises.empty());
      for (const auto& p : d.premises) CHECK(shown.count(p) == 1);
      shown.insert(d.conclusion);
    }
  }
  // the jurisdiction goal is a postulate: one axiom step
  auto r4 = kb.check_goal(goals[4]);
  REQUIRE(r4.trace.size() == 1);
  CHECK(r4.trace[0].rule == "axiom");

  // the hop goals need the full R0 -> R1 -> R2 chain
  auto r0 = kb.check_goal(goals[0]);
  std::set<std::string> rules;
  for (const auto& d : r0.trace) rules.insert(d.rule);
  CHECK(rules.count("R0") == 1);
  CHECK(rules.count("R1") == 1);
  CHECK(rules.count("R2") == 1);
}

TEST_CASE("dropping the device-fog key axiom severs the first hop") {
  auto theory = ban::standard_theory();
  Statement dropped = S::believes("D", S::shared_key("K_DF", "D", "F"));
  std::erase_if(theory, [&](const Statement& s) { return s == dropped; });
  REQUIRE(theory.size() == 21);

  KnowledgeBase kb = ban::closure_of(theory);
  CHECK(kb.size() == 30);  // loses the R0/R1/R2 chain for the D->F hop

  auto goal = S::believes("F", S::believes("D", S::atom("data")));
  auto r = kb.check_goal(goal);
  CHECK_FALSE(r.derivable);
  // K_DF left the vocabulary with its axiom, so the frontier asks for a
  // sighting of `data` under each surviving key instead.
  REQUIRE(r.frontier.size() == 3);
  for (const auto& f : r.frontier) {
    CHECK(f.starts_with("sees F encrypted "));
    CHECK(f.ends_with(" data"));
    CHECK(f.find("K_DF") == std::string::npos);
  }

  // the other three hops are unaffected
  auto goals = ban::standard_goals();
  for (int i : {1, 2, 3, 4}) CHECK(kb.check_goal(goals[i]).derivable);
}

TEST_CASE("negative controls stay underivable") {
  KnowledgeBase kb = ban::closure_of(ban::standard_theory());
  const char* controls[] = {
      "believes B data",
      "sees B data",
      "believes M believes D data",
      "believes D believes F data",
      "believes F believes M aggregation-and-computation",
  };
  for (const char* text : controls) {
    auto r = kb.check_goal(ban::parse_statement(text));
    CHECK_FALSE(r.derivable);
    CHECK(r.trace.empty());
    CHECK_FALSE(r.frontier.empty());
  }

  // the ledger never decrypts: its frontier names the missing ciphertext sightings
  auto r = kb.check_goal(ban::parse_statement("believes B data"));
  bool mentions_sees = false;
  for (const auto& f : r.frontier) {
    if (f.find("sees B encrypted") != std::string::npos) mentions_sees = true;
  }
  CHECK(mentions_sees);
}

TEST_CASE("closure is monotone and idempotent") {
  auto theory = ban::standard_theory();
  KnowledgeBase base = ban::closure_of(theory);

  auto extended = theory;
  extended.push_back(S::believes("Z", S::atom("something-else")));
  KnowledgeBase bigger = ban::closure_of(extended);
  CHECK(bigger.size() == 35);
  for (const auto& f : base.fact_texts()) CHECK(bigger.fact_texts().count(f) == 1);

  KnowledgeBase kb;
  Statement a = S::believes("D", S::atom("x"));
  CHECK(kb.add_axiom(a));
  CHECK_FALSE(kb.add_axiom(a));  // duplicate
  CHECK(kb.size() == 1);
  kb.derive_closure();
  std::size_t n = kb.size();
  kb.derive_closure();
  CHECK(kb.size() == n);
}

TEST_CASE("each inference rule fires on a minimal theory") {
  SECTION("R0 and R1: message meaning through a shared key") {
    KnowledgeBase kb;
    kb.add_axiom(S::believes("A", S::shared_key("K", "A", "Q")));
    kb.add_axiom(S::sees("Q", S::encrypted("K", S::atom("m"))));
    kb.derive_closure();
    CHECK(kb.contains(S::believes("Q", S::shared_key("K", "A", "Q"))));
    CHECK(kb.contains(S::believes("Q", S::said("A", S::atom("m")))));
  }
  SECTION("R2: nonce verification needs freshness") {
    KnowledgeBase kb;
    kb.add_axiom(S::believes("Q", S::said("A", S::atom("m"))));
    kb.derive_closure();
    CHECK_FALSE(kb.contains(S::believes("Q", S::believes("A", S::atom("m")))));
    kb.add_axiom(S::believes("Q", S::fresh(S::atom("m"))));
    kb.derive_closure();
    CHECK(kb.contains(S::believes("Q", S::believes("A", S::atom("m")))));
  }
  SECTION("R3: jurisdiction promotes nested belief") {
    KnowledgeBase kb;
    kb.add_axiom(S::believes("A", S::controls("J", S::atom("verdict"))));
    kb.add_axiom(S::believes("A", S::believes("J", S::atom("verdict"))));
    kb.derive_closure();
    CHECK(kb.contains(S::believes("A", S::atom("verdict"))));
  }
  SECTION("R4: conjunction decomposition under sees") {
    KnowledgeBase kb;
    kb.add_axiom(S::sees("A", S::conj(S::atom("x"), S::atom("y"))));
    kb.derive_closure();
    CHECK(kb.contains(S::sees("A", S::atom("x"))));
    CHECK(kb.contains(S::sees("A", S::atom("y"))));
  }
}

TEST_CASE("shipped theory file matches the built-in postulates") {
  std::ifstream in(std::string(FLDABE_SOURCE_DIR) + "/theories/fl_dabe_bc.ban");
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  auto parsed = ban::parse_theory(buf.str());

  auto builtin = ban::standard_theory();
  std::set<std::string> a, b;
  for (const auto& s : parsed) a.insert(s.text());
  for (const auto& s : builtin) b.insert(s.text());
  CHECK(a == b);

  std::ifstream gin(std::string(FLDABE_SOURCE_DIR) + "/theories/goals.txt");
  REQUIRE(gin.good());
  std::stringstream gbuf;
  gbuf << gin.rdbuf();
  auto goals = ban::parse_theory(gbuf.str());
  auto want = ban::standard_goals();
  REQUIRE(goals.size() == want.size());
  for (std::size_t i = 0; i < goals.size(); ++i) CHECK(goals[i] == want[i]);
}
