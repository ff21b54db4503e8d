#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jopkit/abi.hpp"
#include "jopkit/elf_image.hpp"
#include "jopkit/gadgets.hpp"

namespace jopkit {

struct SecretRegion {
  uint64_t address = 0;
  uint64_t length = 0;
};

struct ChainGoal {
  std::string syscall_name = "write";
  std::optional<uint32_t> syscall_number;  // looked up by name when absent
  std::map<uint8_t, uint64_t> required_regs;
  std::optional<SecretRegion> secret_region;
};

enum class Purpose : uint8_t {
  InitLiteral,
  Increment,
  LoadAddress,
  SetFd,
  Syscall,
  Initializer,
};

const char* purpose_name(Purpose p);
std::optional<Purpose> purpose_from_name(std::string_view name);

struct ChainStep {
  uint64_t gadget_addr = 0;
  Purpose purpose = Purpose::InitLiteral;
  uint32_t repeat = 1;  // > 1 only for increment steps
  uint8_t target_reg = 0;
  std::string rationale;
};

// Where the initializer's loads fetch the dispatcher address and the table
// cursor seed from, relative to the victim's register state at hijack time.
struct SeedSlot {
  uint8_t base_reg = 0;
  int32_t offset = 0;
  uint8_t dest_reg = 0;
};

struct ChainPlan {
  ChainStep initializer;
  DispatcherGadget dispatcher;
  std::vector<ChainStep> steps;  // forward order, syscall last
  std::map<uint8_t, uint64_t> predicted_final_state;
  ChainGoal goal;
  SeedSlot dispatcher_slot;  // feeds policy.dispatcher_reg
  SeedSlot cursor_slot;      // feeds policy.table_cursor_reg
  ReservedPolicy policy;
  Xlen xlen = Xlen::Rv32;

  uint64_t syscall_entry_addr() const {
    return steps.empty() ? 0 : steps.back().gadget_addr;
  }
  // Dispatch-table entries the plan expands to (repeats included).
  uint64_t table_entry_count() const {
    uint64_t n = 0;
    for (const ChainStep& s : steps) n += s.repeat;
    return n;
  }
};

class PlanError : public std::runtime_error {
 public:
  enum class Kind {
    NoDispatcher,
    NoInitializer,
    UnsatisfiableRegister,
    Unsynthesizable,
    SyscallNotFound,
    InvalidGoal,
  };

  PlanError(Kind kind, const std::string& what, uint8_t reg = 0)
      : std::runtime_error(what), kind_(kind), reg_(reg) {}

  Kind kind() const { return kind_; }
  uint8_t reg() const { return reg_; }

 private:
  Kind kind_;
  uint8_t reg_;
};

// A gadget that establishes a known constant in a register, and one that
// adds a known constant to it.
struct LiteralSetter {
  uint64_t gadget_addr = 0;
  uint64_t value = 0;
};
struct LiteralIncrementer {
  uint64_t gadget_addr = 0;
  uint64_t delta = 0;
};

// Builds target as setter value + n * incrementer delta, minimizing total
// step count over all pairs. Repeat counts are capped at 65536.
std::vector<ChainStep> synthesize_literal(
    uint64_t target, uint8_t reg, const std::vector<LiteralSetter>& setters,
    const std::vector<LiteralIncrementer>& incrementers);

struct SyscallResolution {
  std::optional<uint64_t> explicit_addr;  // trusted verbatim
  std::optional<std::string> symbol;      // defaults to the syscall name
  std::optional<int64_t> offset;          // skips the instruction scan
};

// Finds the code address where the syscall id register is loaded with the
// goal's number just before an ecall.
ChainStep resolve_syscall_entry(const ChainGoal& goal, const ElfImage& image,
                                const SyscallConvention& conv,
                                const SyscallResolution& res = {});

ChainPlan plan_chain(const ChainGoal& goal,
                     const std::vector<GadgetCandidate>& safe_catalog,
                     const DispatcherGadget& dispatcher,
                     const GadgetCandidate& initializer, const ElfImage& image,
                     const ScanOptions& opt,
                     const SyscallResolution& res = {});

}  // namespace jopkit
