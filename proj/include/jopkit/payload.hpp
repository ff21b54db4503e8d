#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "jopkit/planner.hpp"

namespace jopkit {

// The vulnerable allocation: an attacker-writable buffer followed by a
// function pointer the overflow reaches, plus the register state the victim
// establishes before calling through that pointer.
struct VulnSpec {
  uint64_t buffer_addr = 0;
  uint64_t capacity = 0;        // writable bytes from buffer_addr
  uint64_t pointer_offset = 0;  // function pointer location in the buffer
  std::optional<uint64_t> table_addr;  // absent: table co-located in buffer
  std::map<uint8_t, uint64_t> call_context;  // victim regs at the call
};

struct DispatchTable {
  uint64_t base_addr = 0;   // address of entries[0]
  uint32_t entry_size = 4;  // register width in bytes
  int32_t stride = 4;
  std::vector<uint64_t> entries;  // gadget addresses, repeats expanded
  uint64_t cursor_seed = 0;  // initial cursor value the initializer loads

  uint64_t entry_addr(size_t i) const {
    return base_addr + static_cast<uint64_t>(static_cast<int64_t>(stride) *
                                             static_cast<int64_t>(i));
  }
  // Byte span [lo, hi) covering all entries.
  uint64_t span_lo() const;
  uint64_t span_hi() const;
};

struct Payload {
  uint64_t buffer_addr = 0;
  std::vector<uint8_t> buffer_fill;  // exactly the attacker's write
  uint64_t pointer_offset = 0;
  uint64_t pointer_value = 0;  // initializer gadget address
  std::vector<std::pair<uint64_t, uint64_t>> seed_words;  // addr -> value
  uint64_t table_addr = 0;       // entries[0] address
  uint64_t table_span_addr = 0;  // first byte of the table blob
  std::vector<uint8_t> table_blob;
  bool table_in_buffer = true;
};

class PayloadError : public std::runtime_error {
 public:
  enum class Kind { Misaligned, CapacityExceeded, SeedOutsideBuffer };

  PayloadError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Expands plan steps into table entries at base and derives the cursor seed
// that makes the dispatcher's first load land on entries[0].
DispatchTable build_dispatch_table(const ChainPlan& plan, uint64_t base);

Payload build_payload(const ChainPlan& plan, const DispatchTable& table,
                      const VulnSpec& vuln);

// Deterministic table placement when the vuln spec leaves it unset: the
// first aligned address past the overwritten pointer.
uint64_t choose_table_base(const VulnSpec& vuln, uint32_t entry_size);

}  // namespace jopkit
