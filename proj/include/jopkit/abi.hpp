#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace jopkit {

enum class RegRole : uint8_t {
  Zero,
  ReturnAddress,
  StackPointer,
  GlobalPointer,
  ThreadPointer,
  Argument,
  Temporary,
  Saved,
};

struct RegisterRole {
  uint8_t index;
  const char* abi_name;
  RegRole role;
  bool caller_saved;
};

// Standard RV32I integer register roles (psABI chapter 18 convention).
const RegisterRole& abi_role(uint8_t index);

const char* reg_name(uint8_t index);
const char* role_name(RegRole role);

// Accepts ABI names ("a3", "zero", "fp") and raw "x13" forms.
std::optional<uint8_t> reg_from_name(std::string_view name);

// Well-known indices used throughout.
inline constexpr uint8_t kRegZero = 0;
inline constexpr uint8_t kRegRa = 1;
inline constexpr uint8_t kRegSp = 2;
inline constexpr uint8_t kRegA0 = 10;
inline constexpr uint8_t kRegA1 = 11;
inline constexpr uint8_t kRegA2 = 12;
inline constexpr uint8_t kRegA3 = 13;
inline constexpr uint8_t kRegA4 = 14;
inline constexpr uint8_t kRegA5 = 15;
inline constexpr uint8_t kRegA7 = 17;

// The registers the chain must keep intact: one holds the dispatcher
// address, the other the current dispatch-table entry. Only the
// initializer gadget may write them.
struct ReservedPolicy {
  uint8_t dispatcher_reg = kRegA3;
  uint8_t table_cursor_reg = kRegA4;

  bool valid() const { return dispatcher_reg != table_cursor_reg; }
};

bool is_reserved(uint8_t index, const ReservedPolicy& policy);

// ecall convention: syscall id in the last argument register, arguments in
// a0-a6. Numbers default to the Linux riscv (asm-generic) table; they are
// configuration, overridable per target.
struct SyscallConvention {
  uint8_t id_register = kRegA7;
  std::array<uint8_t, 7> arg_registers = {10, 11, 12, 13, 14, 15, 16};
  std::map<std::string, uint32_t> syscall_numbers = {
      {"read", 63}, {"write", 64}, {"openat", 56}, {"close", 57}, {"exit", 93},
  };

  std::optional<uint32_t> number_of(const std::string& name) const {
    auto it = syscall_numbers.find(name);
    if (it == syscall_numbers.end()) return std::nullopt;
    return it->second;
  }
};

// Register-set helpers; 32 registers fit one mask word.
inline uint32_t reg_bit(uint8_t index) { return 1u << index; }
inline bool mask_has(uint32_t mask, uint8_t index) {
  return (mask & reg_bit(index)) != 0;
}
std::string mask_to_string(uint32_t mask);

}  // namespace jopkit
