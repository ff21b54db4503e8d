#pragma once

#include <string>

#include "jopkit/report.hpp"

namespace jopkit {

struct RunConfig {
  std::string input;  // ELF path
  ScanOptions scan;
  ChainGoal goal;
  VulnSpec vuln;
  SyscallResolution syscall;
  ExecOptions exec;
};

// Merges fields present in a config document over the given defaults.
RunConfig config_from_json(const Json& j, RunConfig base = {});

Json stage_scan(const RunConfig& config);
Json stage_plan(const RunConfig& config, const Json& catalog);
Json stage_emit(const RunConfig& config, const Json& plan);
Json stage_verify(const RunConfig& config, const Json& plan,
                  const Json& payload, const Json* catalog = nullptr);

struct AttackResult {
  Json catalog;
  Json plan;
  Json payload;
  Json verdict;
  Json report;
  bool goal_met = false;
};

// The one-shot pipeline: scan, plan, emit, verify, report, all in process.
// Each stage consumes exactly the documents the staged commands exchange, so
// outputs are byte-identical either way.
AttackResult run_attack(const RunConfig& config);

}  // namespace jopkit
