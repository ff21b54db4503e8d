#include "jopkit/abi.hpp"

#include <array>
#include <cctype>
#include <cstdlib>

namespace jopkit {

namespace {

constexpr std::array<RegisterRole, 32> kRoles = {{
    {0, "zero", RegRole::Zero, false},
    {1, "ra", RegRole::ReturnAddress, true},
    {2, "sp", RegRole::StackPointer, false},
    {3, "gp", RegRole::GlobalPointer, false},
    {4, "tp", RegRole::ThreadPointer, false},
    {5, "t0", RegRole::Temporary, true},
    {6, "t1", RegRole::Temporary, true},
    {7, "t2", RegRole::Temporary, true},
    {8, "s0", RegRole::Saved, false},
    {9, "s1", RegRole::Saved, false},
    {10, "a0", RegRole::Argument, true},
    {11, "a1", RegRole::Argument, true},
    {12, "a2", RegRole::Argument, true},
    {13, "a3", RegRole::Argument, true},
    {14, "a4", RegRole::Argument, true},
    {15, "a5", RegRole::Argument, true},
    {16, "a6", RegRole::Argument, true},
    {17, "a7", RegRole::Argument, true},
    {18, "s2", RegRole::Saved, false},
    {19, "s3", RegRole::Saved, false},
    {20, "s4", RegRole::Saved, false},
    {21, "s5", RegRole::Saved, false},
    {22, "s6", RegRole::Saved, false},
    {23, "s7", RegRole::Saved, false},
    {24, "s8", RegRole::Saved, false},
    {25, "s9", RegRole::Saved, false},
    {26, "s10", RegRole::Saved, false},
    {27, "s11", RegRole::Saved, false},
    {28, "t3", RegRole::Temporary, true},
    {29, "t4", RegRole::Temporary, true},
    {30, "t5", RegRole::Temporary, true},
    {31, "t6", RegRole::Temporary, true},
}};

}  // namespace

const RegisterRole& abi_role(uint8_t index) {
  return kRoles[index & 0x1F];
}

const char* reg_name(uint8_t index) {
  return kRoles[index & 0x1F].abi_name;
}

const char* role_name(RegRole role) {
  switch (role) {
    case RegRole::Zero: return "zero";
    case RegRole::ReturnAddress: return "return-address";
    case RegRole::StackPointer: return "stack-pointer";
    case RegRole::GlobalPointer: return "global-pointer";
    case RegRole::ThreadPointer: return "thread-pointer";
    case RegRole::Argument: return "argument";
    case RegRole::Temporary: return "temporary";
    case RegRole::Saved: return "saved";
  }
  return "?";
}

std::optional<uint8_t> reg_from_name(std::string_view name) {
  if (name.empty()) return std::nullopt;
  if (name == "fp") return 8;
  if (name[0] == 'x') {
    int v = 0;
    if (name.size() < 2 || name.size() > 3) return std::nullopt;
    for (size_t i = 1; i < name.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(name[i])))
        return std::nullopt;
      v = v * 10 + (name[i] - '0');
    }
    if (v > 31) return std::nullopt;
    if (name.size() == 3 && name[1] == '0') return std::nullopt;
    return static_cast<uint8_t>(v);
  }
  for (const RegisterRole& r : kRoles) {
    if (name == r.abi_name) return r.index;
  }
  return std::nullopt;
}

bool is_reserved(uint8_t index, const ReservedPolicy& policy) {
  return index == policy.dispatcher_reg || index == policy.table_cursor_reg;
}

std::string mask_to_string(uint32_t mask) {
  std::string out;
  for (uint8_t r = 0; r < 32; ++r) {
    if (mask & (1u << r)) {
      if (!out.empty()) out += ",";
      out += reg_name(r);
    }
  }
  return out;
}

}  // namespace jopkit
