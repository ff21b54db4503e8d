#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jopkit/elf_image.hpp"
#include "jopkit/gadgets.hpp"
#include "jopkit/payload.hpp"
#include "jopkit/planner.hpp"

namespace jopkit {

struct MemRegion {
  std::string name;
  uint64_t addr = 0;
  std::vector<uint8_t> bytes;
  bool writable = true;

  bool contains(uint64_t a) const {
    return a >= addr && a < addr + bytes.size();
  }
};

enum class FaultKind { UnmappedAccess, IllegalInstruction, MisalignedFetch };

const char* fault_name(FaultKind k);

struct Fault {
  FaultKind kind = FaultKind::UnmappedAccess;
  uint64_t pc = 0;
  uint64_t addr = 0;  // offending data address when relevant
};

struct Trap {
  uint64_t pc = 0;
  std::array<uint64_t, 32> regs{};
};

struct TraceEntry {
  uint64_t pc = 0;
  uint32_t raw = 0;
  std::string text;
  std::optional<uint8_t> written_reg;  // architectural destination, never x0
  uint64_t written_value = 0;
};

// Deterministic RV32I interpreter. x0 stays zero; faults and the ecall trap
// halt execution and leave their cause inspectable.
class Machine {
 public:
  explicit Machine(Xlen xlen = Xlen::Rv32) : xlen_(xlen) {}

  void map_image(const ElfImage& image);
  void map_region(MemRegion region);  // shadows earlier mappings

  std::optional<uint8_t> load8(uint64_t addr) const;
  std::optional<uint32_t> load32(uint64_t addr) const;
  bool store8(uint64_t addr, uint8_t value);

  void step();
  // Runs until trap, fault, or the step budget is spent. Returns steps taken.
  uint64_t run(uint64_t max_steps);

  bool halted() const { return trap.has_value() || fault.has_value(); }

  Xlen xlen() const { return xlen_; }

  std::array<uint64_t, 32> regs{};
  uint64_t pc = 0;
  uint64_t steps_executed = 0;
  std::optional<Trap> trap;
  std::optional<Fault> fault;

  bool trace_enabled = false;
  std::vector<TraceEntry> trace;

 private:
  const MemRegion* region_at(uint64_t addr) const;
  MemRegion* region_at(uint64_t addr);

  Xlen xlen_;
  std::vector<MemRegion> mem_;
};

enum class Outcome : uint8_t { GoalMet, GoalMissed, Fault, StepLimit };

const char* outcome_name(Outcome o);
std::optional<Outcome> outcome_from_name(std::string_view name);

struct Verdict {
  Outcome outcome = Outcome::GoalMissed;
  std::optional<Trap> trap;
  std::optional<Fault> fault;
  uint64_t steps = 0;
  std::vector<TraceEntry> trace;
  std::vector<uint8_t> exfiltrated;  // bytes the modeled write would emit
  std::string detail;
};

struct ExecOptions {
  uint64_t max_steps = 100000;
  bool trace = true;
};

// Maps the image and the payload, simulates the victim's call through the
// overwritten pointer, runs to trap/fault/limit, and scores the goal.
Verdict execute(const ElfImage& image, const Payload& payload,
                const VulnSpec& vuln, const ChainGoal& goal,
                const ExecOptions& opt = {});

struct TraceSegment {
  uint64_t start_pc = 0;
  size_t first_step = 0;
  size_t step_count = 0;
  std::string label;  // matched catalog gadget or "unknown code"
};

// Splits the trace at dispatcher reentries and labels each segment with the
// catalog gadget it lands in.
std::vector<TraceSegment> trace_gadgets(
    const Verdict& verdict, const std::vector<GadgetCandidate>& catalog,
    const DispatcherGadget& dispatcher);

}  // namespace jopkit
