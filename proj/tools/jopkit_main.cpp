#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jopkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace jopkit;

namespace {

const char* load_error_name(LoadError::Kind k) {
  switch (k) {
    case LoadError::Kind::NotElf: return "NotElf";
    case LoadError::Kind::UnsupportedClass: return "UnsupportedClass";
    case LoadError::Kind::Malformed: return "Malformed";
  }
  return "?";
}

const char* plan_error_name(PlanError::Kind k) {
  switch (k) {
    case PlanError::Kind::NoDispatcher: return "NoDispatcher";
    case PlanError::Kind::NoInitializer: return "NoInitializer";
    case PlanError::Kind::UnsatisfiableRegister: return "UnsatisfiableRegister";
    case PlanError::Kind::Unsynthesizable: return "Unsynthesizable";
    case PlanError::Kind::SyscallNotFound: return "SyscallNotFound";
    case PlanError::Kind::InvalidGoal: return "InvalidGoal";
  }
  return "?";
}

const char* payload_error_name(PayloadError::Kind k) {
  switch (k) {
    case PayloadError::Kind::Misaligned: return "Misaligned";
    case PayloadError::Kind::CapacityExceeded: return "CapacityExceeded";
    case PayloadError::Kind::SeedOutsideBuffer: return "SeedOutsideBuffer";
  }
  return "?";
}

int guarded(const char* stage, const std::function<int()>& body) {
  try {
    return body();
  } catch (const LoadError& e) {
    std::cerr << stage << ": " << load_error_name(e.kind()) << ": " << e.what()
              << "\n";
  } catch (const PlanError& e) {
    std::cerr << stage << ": " << plan_error_name(e.kind()) << ": " << e.what()
              << "\n";
  } catch (const PayloadError& e) {
    std::cerr << stage << ": " << payload_error_name(e.kind()) << ": "
              << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << stage << ": " << e.what() << "\n";
  }
  return 1;
}

uint64_t parse_u64(const std::string& s) {
  return std::stoull(s, nullptr, 0);
}

// Everything any subcommand may set; only options actually passed are read.
struct Flags {
  std::string input;
  std::string config;
  std::string outdir;

  std::string max_window;
  bool relax_imm = false;
  std::string dispatcher_reg, cursor_reg, id_register, reentry;

  std::string syscall_name, syscall_number;
  std::vector<std::string> regs;
  std::string secret;
  std::string sys_addr, sys_symbol, sys_offset;

  std::string buffer_addr, capacity, pointer_offset, table_addr;
  std::vector<std::string> ctx;

  std::string max_steps;
  bool no_trace = false;

  std::string out, catalog, plan, payload, bin, table_bin, verdict;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config, "JSON config file (flags override)");
  cmd->add_option("-O,--outdir", f.outdir,
                  "output directory (default $JOPKIT_OUT or .)");
}

void add_scan_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--max-window", f.max_window,
                  "longest candidate window in instructions");
  cmd->add_flag("--relax-imm", f.relax_imm,
                "keep gadgets with nonzero jump displacement");
  cmd->add_option("--dispatcher-reg", f.dispatcher_reg,
                  "reserved dispatcher-address register");
  cmd->add_option("--cursor-reg", f.cursor_reg,
                  "reserved table-cursor register");
  cmd->add_option("--id-register", f.id_register, "syscall id register");
  cmd->add_option("--two-stage-reentry", f.reentry,
                  "stage1 or stage2 reentry for split dispatchers");
}

void add_goal_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--syscall", f.syscall_name, "target system call name");
  cmd->add_option("--syscall-number", f.syscall_number,
                  "override the syscall table lookup");
  cmd->add_option("--reg", f.regs,
                  "required register value, NAME=VALUE (repeatable)");
  cmd->add_option("--secret", f.secret,
                  "expected exfiltration source, ADDR:LEN");
  cmd->add_option("--syscall-addr", f.sys_addr,
                  "trusted syscall-entry address");
  cmd->add_option("--syscall-symbol", f.sys_symbol,
                  "symbol to resolve the entry from");
  cmd->add_option("--syscall-offset", f.sys_offset,
                  "entry displacement from the resolved symbol");
}

void add_vuln_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--buffer-addr", f.buffer_addr,
                  "overflowed buffer address");
  cmd->add_option("--capacity", f.capacity, "attacker-writable bytes");
  cmd->add_option("--pointer-offset", f.pointer_offset,
                  "hijacked pointer offset inside the buffer");
  cmd->add_option("--table-addr", f.table_addr,
                  "dispatch-table address (default: inside the buffer)");
  cmd->add_option("--ctx", f.ctx,
                  "victim register at the call, NAME=VALUE (repeatable)");
}

void add_exec_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--max-steps", f.max_steps, "emulation step budget");
  cmd->add_flag("--no-trace", f.no_trace, "skip per-step trace capture");
}

bool has(const CLI::App& cmd, const std::string& name) {
  const CLI::Option* o = cmd.get_option_no_throw(name);
  return o != nullptr && o->count() > 0;
}

Json reg_pairs_to_json(const std::vector<std::string>& pairs) {
  Json j = Json::object();
  for (const std::string& p : pairs) {
    auto eq = p.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("expected NAME=VALUE, got: " + p);
    j[p.substr(0, eq)] = parse_u64(p.substr(eq + 1));
  }
  return j;
}

Json overlay_from_flags(const CLI::App& cmd, const Flags& f) {
  Json j = Json::object();
  if (!f.input.empty()) j["input"] = f.input;

  if (has(cmd, "--max-window")) j["scan"]["max-window"] = parse_u64(f.max_window);
  if (has(cmd, "--relax-imm")) j["scan"]["relax-imm"] = f.relax_imm;
  if (has(cmd, "--dispatcher-reg")) j["scan"]["dispatcher-reg"] = f.dispatcher_reg;
  if (has(cmd, "--cursor-reg")) j["scan"]["cursor-reg"] = f.cursor_reg;
  if (has(cmd, "--id-register")) j["scan"]["id-register"] = f.id_register;
  if (has(cmd, "--two-stage-reentry")) j["scan"]["two-stage-reentry"] = f.reentry;

  if (has(cmd, "--syscall")) j["goal"]["syscall"] = f.syscall_name;
  if (has(cmd, "--syscall-number"))
    j["goal"]["syscall-number"] = parse_u64(f.syscall_number);
  if (has(cmd, "--reg")) j["goal"]["required-regs"] = reg_pairs_to_json(f.regs);
  if (has(cmd, "--secret")) {
    auto colon = f.secret.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("expected ADDR:LEN, got: " + f.secret);
    j["goal"]["secret-region"]["address"] =
        parse_u64(f.secret.substr(0, colon));
    j["goal"]["secret-region"]["length"] =
        parse_u64(f.secret.substr(colon + 1));
  }
  if (has(cmd, "--syscall-addr")) j["syscall"]["addr"] = parse_u64(f.sys_addr);
  if (has(cmd, "--syscall-symbol")) j["syscall"]["symbol"] = f.sys_symbol;
  if (has(cmd, "--syscall-offset"))
    j["syscall"]["offset"] = std::stoll(f.sys_offset, nullptr, 0);

  if (has(cmd, "--buffer-addr"))
    j["vuln"]["buffer-addr"] = parse_u64(f.buffer_addr);
  if (has(cmd, "--capacity")) j["vuln"]["capacity"] = parse_u64(f.capacity);
  if (has(cmd, "--pointer-offset"))
    j["vuln"]["pointer-offset"] = parse_u64(f.pointer_offset);
  if (has(cmd, "--table-addr"))
    j["vuln"]["table-addr"] = parse_u64(f.table_addr);
  if (has(cmd, "--ctx")) j["vuln"]["call-context"] = reg_pairs_to_json(f.ctx);

  if (has(cmd, "--max-steps")) j["exec"]["max-steps"] = parse_u64(f.max_steps);
  if (has(cmd, "--no-trace")) j["exec"]["trace"] = !f.no_trace;
  return j;
}

RunConfig build_config(const CLI::App& cmd, const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = config_from_json(read_json_file(f.config), cfg);
  return config_from_json(overlay_from_flags(cmd, f), cfg);
}

std::string outdir_of(const Flags& f) {
  std::string dir = ".";
  if (!f.outdir.empty())
    dir = f.outdir;
  else if (const char* env = std::getenv("JOPKIT_OUT"); env && *env)
    dir = env;
  fs::create_directories(dir);
  return dir;
}

std::string pick_path(const std::string& flag_value, const Flags& f,
                      const char* name) {
  if (!flag_value.empty()) return flag_value;
  return (fs::path(outdir_of(f)) / name).string();
}

Json require_doc(const char* stage, const std::string& path,
                 const char* hint) {
  if (!fs::exists(path))
    throw std::runtime_error(std::string("usage: missing ") + hint + " '" +
                             path + "' (" + stage + " needs it; see --help)");
  return read_json_file(path);
}

void write_payload_files(const Flags& f, const Json& payload_doc) {
  write_json_file(pick_path(f.out, f, "payload.json"), payload_doc);
  PayloadDoc pd = payload_from_json(payload_doc);
  write_binary_file(pick_path(f.bin, f, "payload.bin"),
                    pd.payload.buffer_fill);
  if (!pd.payload.table_in_buffer)
    write_binary_file(pick_path(f.table_bin, f, "table.bin"),
                      pd.payload.table_blob);
}

void describe_catalog(const Json& catalog) {
  size_t safe = 0;
  for (const auto& c : catalog.at("candidates"))
    if (c.at("safe").get<bool>()) ++safe;
  std::cout << "scan: " << catalog.at("candidates").size() << " candidates ("
            << safe << " safe), " << catalog.at("dispatchers").size()
            << " dispatchers, " << catalog.at("initializers").size()
            << " initializers\n";
}

void describe_verdict(const Json& verdict) {
  std::cout << "verify: " << verdict.at("outcome").get<std::string>() << " in "
            << verdict.at("steps").get<uint64_t>() << " steps";
  const std::string hex = verdict.at("exfiltrated-hex").get<std::string>();
  if (!hex.empty()) std::cout << ", exfiltrated " << hex.size() / 2 << " bytes";
  std::cout << "\n";
}

int verdict_exit(const Json& verdict) {
  return verdict.at("outcome").get<std::string>() ==
                 outcome_name(Outcome::GoalMet)
             ? 0
             : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"JOP attack-surface toolkit for RV32 ELF binaries"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* scan = app.add_subcommand("scan", "catalog gadgets in a binary");
  scan->add_option("input", f.input, "ELF binary");
  add_common(scan, f);
  add_scan_flags(scan, f);
  scan->add_option("-o,--out", f.out, "catalog output path");

  CLI::App* plan = app.add_subcommand("plan", "build a chain plan from a catalog");
  plan->add_option("input", f.input, "ELF binary (default: recorded in catalog)");
  add_common(plan, f);
  add_goal_flags(plan, f);
  plan->add_option("--catalog", f.catalog, "catalog document");
  plan->add_option("-o,--out", f.out, "plan output path");

  CLI::App* emit = app.add_subcommand("emit", "materialize table and payload");
  add_common(emit, f);
  add_vuln_flags(emit, f);
  emit->add_option("--plan", f.plan, "plan document");
  emit->add_option("-o,--out", f.out, "payload document path");
  emit->add_option("--bin", f.bin, "raw buffer bytes path");
  emit->add_option("--table-bin", f.table_bin, "split table bytes path");

  CLI::App* verify = app.add_subcommand("verify", "emulate the payload and score the goal");
  verify->add_option("input", f.input, "ELF binary (default: recorded in plan)");
  add_common(verify, f);
  add_vuln_flags(verify, f);
  add_exec_flags(verify, f);
  verify->add_option("--plan", f.plan, "plan document");
  verify->add_option("--payload", f.payload, "payload document");
  verify->add_option("--catalog", f.catalog, "catalog document (trace labels)");
  verify->add_option("-o,--out", f.out, "verdict output path");

  CLI::App* attack = app.add_subcommand("attack", "run the whole pipeline in process");
  attack->add_option("input", f.input, "ELF binary");
  add_common(attack, f);
  add_scan_flags(attack, f);
  add_goal_flags(attack, f);
  add_vuln_flags(attack, f);
  add_exec_flags(attack, f);

  CLI::App* report = app.add_subcommand("report", "bundle stage artifacts into one document");
  add_common(report, f);
  report->add_option("--catalog", f.catalog, "catalog document");
  report->add_option("--plan", f.plan, "plan document");
  report->add_option("--payload", f.payload, "payload document");
  report->add_option("--verdict", f.verdict, "verdict document");
  report->add_option("-o,--out", f.out, "report output path");

  CLI11_PARSE(app, argc, argv);

  if (scan->parsed()) {
    return guarded("scan", [&] {
      RunConfig cfg = build_config(*scan, f);
      if (cfg.input.empty())
        throw std::runtime_error("usage: no input binary given");
      Json catalog = stage_scan(cfg);
      write_json_file(pick_path(f.out, f, "catalog.json"), catalog);
      describe_catalog(catalog);
      return 0;
    });
  }

  if (plan->parsed()) {
    return guarded("plan", [&] {
      RunConfig cfg = build_config(*plan, f);
      Json catalog = require_doc(
          "plan", pick_path(f.catalog, f, "catalog.json"), "catalog document");
      Json doc = stage_plan(cfg, catalog);
      write_json_file(pick_path(f.out, f, "plan.json"), doc);
      std::cout << "plan: " << doc.at("steps").size() << " steps, "
                << doc.at("table-entries").get<uint64_t>()
                << " table entries\n";
      return 0;
    });
  }

  if (emit->parsed()) {
    return guarded("emit", [&] {
      RunConfig cfg = build_config(*emit, f);
      Json plan_doc =
          require_doc("emit", pick_path(f.plan, f, "plan.json"), "plan document");
      Json payload_doc = stage_emit(cfg, plan_doc);
      write_payload_files(f, payload_doc);
      std::cout << "emit: " << payload_doc.at("table").at("entries").size()
                << " table entries, buffer "
                << payload_doc.at("buffer-hex").get<std::string>().size() / 2
                << " bytes\n";
      return 0;
    });
  }

  if (verify->parsed()) {
    return guarded("verify", [&] {
      RunConfig cfg = build_config(*verify, f);
      Json plan_doc = require_doc(
          "verify", pick_path(f.plan, f, "plan.json"), "plan document");
      Json payload_doc = require_doc(
          "verify", pick_path(f.payload, f, "payload.json"), "payload document");
      Json catalog;
      bool have_catalog = false;
      std::string cat_path = pick_path(f.catalog, f, "catalog.json");
      if (fs::exists(cat_path)) {
        catalog = read_json_file(cat_path);
        have_catalog = true;
      }
      Json verdict = stage_verify(cfg, plan_doc, payload_doc,
                                  have_catalog ? &catalog : nullptr);
      write_json_file(pick_path(f.out, f, "verdict.json"), verdict);
      describe_verdict(verdict);
      return verdict_exit(verdict);
    });
  }

  if (attack->parsed()) {
    return guarded("attack", [&] {
      RunConfig cfg = build_config(*attack, f);
      if (cfg.input.empty())
        throw std::runtime_error("usage: no input binary given");
      AttackResult r = run_attack(cfg);
      write_json_file(pick_path(f.catalog, f, "catalog.json"), r.catalog);
      write_json_file(pick_path(f.plan, f, "plan.json"), r.plan);
      write_payload_files(f, r.payload);
      write_json_file(pick_path(f.verdict, f, "verdict.json"), r.verdict);
      write_json_file((fs::path(outdir_of(f)) / "report.json").string(),
                      r.report);
      describe_catalog(r.catalog);
      describe_verdict(r.verdict);
      return verdict_exit(r.verdict);
    });
  }

  return guarded("report", [&] {
    Json catalog = require_doc(
        "report", pick_path(f.catalog, f, "catalog.json"), "catalog document");
    Json plan_doc = require_doc(
        "report", pick_path(f.plan, f, "plan.json"), "plan document");
    Json payload_doc = require_doc(
        "report", pick_path(f.payload, f, "payload.json"), "payload document");
    Json verdict;
    bool have_verdict = false;
    std::string vpath = pick_path(f.verdict, f, "verdict.json");
    if (fs::exists(vpath)) {
      verdict = read_json_file(vpath);
      have_verdict = true;
    }
    Json doc = make_report(catalog, plan_doc, payload_doc,
                           have_verdict ? &verdict : nullptr);
    write_json_file(pick_path(f.out, f, "report.json"), doc);
    std::cout << "report: written"
              << (have_verdict ? "" : " (no verdict yet)") << "\n";
    return 0;
  });
}
