// Operator entry point: run simulations and attack scenarios, audit exported
// ledgers, check authentication-logic goals, and mint attribute keyrings.
// Exit codes: 0 success, 1 verification failure, 2 stall, 3 input error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fldabe/banlogic.hpp"
#include "fldabe/common.hpp"
#include "fldabe/dabe.hpp"
#include "fldabe/ledger.hpp"
#include "fldabe/simnet.hpp"

namespace {

using namespace fldabe;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitStalled = 2;
constexpr int kExitInputError = 3;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::IoError:
    case ErrorCode::UnresolvableTarget:
    case ErrorCode::InvalidParameter:
    case ErrorCode::UnknownAttribute:
    case ErrorCode::ForeignAttribute:
    case ErrorCode::UniverseConflict:
      return kExitInputError;
    default:
      return kExitVerifyFailed;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_simulation(const std::string& config_path, const std::string& out_dir,
                   std::optional<std::uint64_t> seed_override,
                   const std::vector<simnet::AdversaryScenario>& extra_scenarios) {
  simnet::SimConfig cfg = simnet::load_config_file(config_path);
  if (seed_override) cfg.seed = *seed_override;
  for (const auto& s : extra_scenarios) cfg.scenarios.push_back(s);

  auto t0 = std::chrono::steady_clock::now();
  simnet::Simulation sim(cfg);
  sim.run();
  std::filesystem::path dir = sim.write_outputs(out_dir);
  auto t1 = std::chrono::steady_clock::now();
  double secs = std::chrono::duration<double>(t1 - t0).count();

  // Wall-clock goes to stderr only, keeping the artifact files byte-stable.
  std::cerr << "wall_clock_seconds " << secs << "\n";
  std::cout << dir.string() << "\n";

  const simnet::Metrics& m = sim.metrics();
  if (m.stall) {
    std::cerr << "stalled at round " << m.stall->round << " (" << protocol::phase_name(m.stall->phase)
              << "): " << m.stall->missing << "\n";
    return kExitStalled;
  }
  return kExitOk;
}

int cmd_ban(const std::string& theory_path, const std::vector<std::string>& goal_texts) {
  std::vector<ban::Statement> theory = ban::parse_theory(read_file(theory_path));
  std::vector<ban::Statement> goals;
  for (const auto& g : goal_texts) goals.push_back(ban::parse_statement(g));

  ban::KnowledgeBase kb = ban::closure_of(theory);
  bool all_ok = true;
  for (const auto& goal : goals) {
    ban::GoalResult res = kb.check_goal(goal);
    if (res.derivable) {
      std::cout << "derivable: " << goal.text() << "\n";
      for (const auto& d : res.trace) {
        std::cout << "  [" << d.rule << "] " << d.conclusion;
        if (!d.premises.empty()) {
          std::cout << "  <=";
          for (const auto& p : d.premises) std::cout << " {" << p << "}";
        }
        std::cout << "\n";
      }
    } else {
      all_ok = false;
      std::cout << "not derivable: " << goal.text() << "\n";
      std::cout << "  missing premise frontier:\n";
      for (const auto& f : res.frontier) std::cout << "    " << f << "\n";
    }
  }
  return all_ok ? kExitOk : kExitVerifyFailed;
}

int cmd_ledger_audit(const std::string& chain_path) {
  std::string content = read_file(chain_path);
  ledger::AuditReport report = ledger::audit_chain_text(content);
  std::cout << "blocks " << report.blocks << "\n";
  std::cout << "transactions " << report.transactions << "\n";
  for (const auto& [kind, count] : report.tx_kind_counts) {
    std::cout << "tx_kind " << kind << " " << count << "\n";
  }
  if (!report.ok) {
    std::cout << "fault at height " << report.fault->height << ": " << report.fault->reason;
    if (!report.fault->detail.empty()) std::cout << " (" << report.fault->detail << ")";
    std::cout << "\n";
    return kExitVerifyFailed;
  }
  std::cout << "chain ok\n";
  return kExitOk;
}

int cmd_keygen(const std::string& authority, const std::string& attrs_csv, const std::string& gid,
               std::uint64_t epoch, std::uint64_t seed, const std::string& out_path) {
  std::set<dabe::Attribute> universe;
  std::vector<std::string> names;
  std::string cur;
  std::istringstream is(attrs_csv);
  while (std::getline(is, cur, ',')) {
    if (cur.empty()) continue;
    names.push_back(cur);
    universe.insert({authority, cur});
  }
  if (names.empty()) raise(ErrorCode::InvalidParameter, "no attributes given");

  dabe::AttributeAuthority auth =
      dabe::AttributeAuthority::setup(authority, universe, seed_from_u64(seed));
  std::set<dabe::Attribute> grant;
  for (const auto& n : names) grant.insert({authority, n});
  dabe::UserKeyring kr = dabe::keygen_user(auth, gid, grant, epoch);

  std::string text = kr.to_json().dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) raise(ErrorCode::IoError, "cannot write " + out_path);
    out << text;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FL-DABE-BC federated-learning protocol toolkit"};
  app.require_subcommand(1);

  // run
  std::string run_config, run_out = "runs";
  std::optional<std::uint64_t> run_seed;
  CLI::App* run = app.add_subcommand("run", "Run a simulation from a JSON config");
  run->add_option("--config", run_config, "Config JSON path")->required();
  run->add_option("--out", run_out, "Output root directory");
  run->add_option("--seed", run_seed, "Seed override");

  // attack: run with one scenario appended
  std::string atk_config, atk_out = "runs", atk_kind, atk_edge = "m1";
  std::optional<std::uint64_t> atk_seed;
  std::uint32_t atk_round = 1, atk_index = 0;
  CLI::App* attack = app.add_subcommand("attack", "Run with an adversary scenario");
  attack->add_option("--config", atk_config, "Config JSON path")->required();
  attack->add_option("--out", atk_out, "Output root directory");
  attack->add_option("--seed", atk_seed, "Seed override");
  attack->add_option("--kind", atk_kind, "replay|modify|mitm|impersonate|eavesdrop")->required();
  attack->add_option("--round", atk_round, "Target round");
  attack->add_option("--edge", atk_edge, "Target edge m1|m2|m3|m4");
  attack->add_option("--index", atk_index, "Target message index on that edge");

  // ban
  std::string ban_theory;
  std::vector<std::string> ban_goals;
  CLI::App* banc = app.add_subcommand("ban", "Check authentication-logic goals");
  banc->add_option("--theory", ban_theory, "Theory file, one statement per line")->required();
  banc->add_option("--goal", ban_goals, "Goal statement (repeatable)");

  // ledger audit
  CLI::App* ledgerc = app.add_subcommand("ledger", "Ledger operations");
  ledgerc->require_subcommand(1);
  std::string audit_chain;
  CLI::App* audit = ledgerc->add_subcommand("audit", "Audit an exported chain");
  audit->add_option("--chain", audit_chain, "ledger.jsonl path")->required();

  // keygen
  std::string kg_authority, kg_attrs, kg_gid, kg_out;
  std::uint64_t kg_epoch = 1, kg_seed = 42;
  CLI::App* keygen = app.add_subcommand("keygen", "Mint an attribute keyring");
  keygen->add_option("--authority", kg_authority, "Authority id")->required();
  keygen->add_option("--attrs", kg_attrs, "Comma-separated attribute names")->required();
  keygen->add_option("--gid", kg_gid, "Global user id")->required();
  keygen->add_option("--epoch", kg_epoch, "Key epoch");
  keygen->add_option("--seed", kg_seed, "Authority master seed");
  keygen->add_option("--out", kg_out, "Write keyring JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*run) return run_simulation(run_config, run_out, run_seed, {});
    if (*attack) {
      simnet::AdversaryScenario s;
      s.kind = simnet::adversary_kind_from(atk_kind);
      s.round = atk_round;
      s.edge = atk_edge;
      s.index = atk_index;
      return run_simulation(atk_config, atk_out, atk_seed, {s});
    }
    if (*banc) return cmd_ban(ban_theory, ban_goals);
    if (*audit) return cmd_ledger_audit(audit_chain);
    if (*keygen) return cmd_keygen(kg_authority, kg_attrs, kg_gid, kg_epoch, kg_seed, kg_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}
