#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "jopkit/abi.hpp"
#include "jopkit/elf_image.hpp"
#include "jopkit/isa.hpp"

namespace jopkit {

// One load or store inside a gadget window.
struct MemEffect {
  uint8_t base = 0;    // address base register
  int32_t offset = 0;
  uint8_t width = 0;   // bytes
  uint8_t reg = 0;     // destination (loads) / stored source (stores)

  bool operator==(const MemEffect&) const = default;
};

struct Terminator {
  uint8_t rd = 0;
  uint8_t rs1 = 0;
  int32_t imm = 0;
};

// Static register/memory effect summary of a straight-line window.
// regs_* are bitmasks over x0..x31; x0 never appears in regs_written.
struct GadgetSummary {
  uint32_t regs_read = 0;
  uint32_t regs_written = 0;
  std::vector<MemEffect> mem_reads;
  std::vector<MemEffect> mem_writes;
  bool has_opaque_effect = false;  // FENCE or CSR access inside the window
  Terminator terminator;
};

enum class Family : uint8_t {
  ArithmeticLogic,
  MemoryAccess,
  FunctionCall,
  SystemCall,
  Branching,
  Dispatcher,
  Initializer,
  Unclassified,
};

const char* family_name(Family f);
std::optional<Family> family_from_name(std::string_view name);

struct GadgetCandidate {
  uint64_t start_addr = 0;
  std::vector<Instruction> instructions;  // terminator last
  GadgetSummary summary;
  Family family = Family::Unclassified;
  bool safe = false;                    // survived filter_safe
  std::optional<int32_t> relaxed_imm;   // terminator offset kept under relax

  size_t length() const { return instructions.size(); }
};

struct DispatcherGadget {
  enum class Kind : uint8_t { SingleStage, TwoStage };

  Kind kind = Kind::SingleStage;
  uint64_t stage1_addr = 0;
  std::optional<uint64_t> stage2_addr;
  uint8_t table_cursor_reg = 0;
  uint8_t jump_reg = 0;
  int32_t stride = 0;          // signed cursor increment per cycle
  uint64_t reentry_addr = 0;   // where functional gadgets jump back to
  int32_t load_offset = 0;     // displacement in the table-entry load
  bool pre_increment = false;  // cursor advanced before the load each cycle
  uint32_t side_writes = 0;    // registers clobbered besides cursor/jump
  uint8_t stage1_len = 0;      // instruction counts, for trace segmentation
  uint8_t stage2_len = 0;
};

struct ScanOptions {
  unsigned max_window = 16;
  bool relax_imm = false;
  ReservedPolicy policy;
  SyscallConvention conv;
  enum class Reentry : uint8_t { Stage1, Stage2 };
  Reentry two_stage_reentry = Reentry::Stage1;
};

// Forward constant propagation over a straight-line window. Registers hold
// known values or nothing; loads resolve through the image when the address
// is known and no prior store may have dirtied memory.
struct ConstState {
  std::array<std::optional<uint64_t>, 32> regs{};
  bool store_seen = false;

  ConstState() { regs[0] = 0; }
};

ConstState eval_window(const std::vector<Instruction>& window,
                       const ElfImage* image, Xlen xlen, ConstState init = {});

GadgetSummary summarize(const std::vector<Instruction>& window);

std::vector<std::pair<uint64_t, Instruction>> find_terminators(
    const ElfImage& image);

// Windows of length 1..max_len ending at the given JALR, walking backward
// and stopping at illegal words and prior control transfers.
std::vector<GadgetCandidate> extract_candidates(const ElfImage& image,
                                                uint64_t terminator_addr,
                                                unsigned max_len);

Family classify(const GadgetCandidate& cand, const ElfImage& image,
                const SyscallConvention& conv);

std::vector<DispatcherGadget> find_dispatchers(const ElfImage& image,
                                               const ScanOptions& opt);

std::vector<GadgetCandidate> filter_safe(
    const std::vector<GadgetCandidate>& candidates, const ScanOptions& opt,
    const DispatcherGadget& dispatcher);

std::vector<GadgetCandidate> find_initializers(const ElfImage& image,
                                               const ScanOptions& opt);

struct ScanResult {
  std::vector<GadgetCandidate> candidates;  // every window, classified
  std::vector<DispatcherGadget> dispatchers;
  std::vector<GadgetCandidate> initializers;
};

// Serial reference implementation.
ScanResult scan_image(const ElfImage& image, const ScanOptions& opt);
// Work-sharing implementation; identical output, terminators scanned in
// parallel and merged in address order.
ScanResult scan_image_parallel(const ElfImage& image, const ScanOptions& opt);

}  // namespace jopkit
