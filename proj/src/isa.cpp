#include "jopkit/isa.hpp"

#include <array>
#include <cstdio>

#include "jopkit/abi.hpp"

namespace jopkit {

namespace {

enum InfoFlags : uint8_t {
  kCtrl = 1 << 0,
  kOpaque = 1 << 1,
  kLoad = 1 << 2,
  kStore = 1 << 3,
  kBranch = 1 << 4,
  kCsrImm = 1 << 5,  // rs1 slot carries a 5-bit uimm, not a register
};

struct MnemonicInfo {
  const char* name;
  Format fmt;
  uint8_t opcode;
  uint8_t funct3;
  uint8_t funct7;
  uint8_t flags;
  uint8_t width;  // memory access width in bytes, 0 if none
};

constexpr uint8_t kOpLui = 0x37;
constexpr uint8_t kOpAuipc = 0x17;
constexpr uint8_t kOpJal = 0x6F;
constexpr uint8_t kOpJalr = 0x67;
constexpr uint8_t kOpBranch = 0x63;
constexpr uint8_t kOpLoad = 0x03;
constexpr uint8_t kOpStore = 0x23;
constexpr uint8_t kOpImm = 0x13;
constexpr uint8_t kOpReg = 0x33;
constexpr uint8_t kOpMiscMem = 0x0F;
constexpr uint8_t kOpSystem = 0x73;

constexpr std::array<MnemonicInfo, kMnemonicCount> kInfo = {{
    {"lui", Format::U, kOpLui, 0, 0, 0, 0},
    {"auipc", Format::U, kOpAuipc, 0, 0, 0, 0},
    {"jal", Format::J, kOpJal, 0, 0, kCtrl, 0},
    {"jalr", Format::I, kOpJalr, 0, 0, kCtrl, 0},
    {"beq", Format::B, kOpBranch, 0, 0, kCtrl | kBranch, 0},
    {"bne", Format::B, kOpBranch, 1, 0, kCtrl | kBranch, 0},
    {"blt", Format::B, kOpBranch, 4, 0, kCtrl | kBranch, 0},
    {"bge", Format::B, kOpBranch, 5, 0, kCtrl | kBranch, 0},
    {"bltu", Format::B, kOpBranch, 6, 0, kCtrl | kBranch, 0},
    {"bgeu", Format::B, kOpBranch, 7, 0, kCtrl | kBranch, 0},
    {"lb", Format::I, kOpLoad, 0, 0, kLoad, 1},
    {"lh", Format::I, kOpLoad, 1, 0, kLoad, 2},
    {"lw", Format::I, kOpLoad, 2, 0, kLoad, 4},
    {"lbu", Format::I, kOpLoad, 4, 0, kLoad, 1},
    {"lhu", Format::I, kOpLoad, 5, 0, kLoad, 2},
    {"sb", Format::S, kOpStore, 0, 0, kStore, 1},
    {"sh", Format::S, kOpStore, 1, 0, kStore, 2},
    {"sw", Format::S, kOpStore, 2, 0, kStore, 4},
    {"addi", Format::I, kOpImm, 0, 0, 0, 0},
    {"slti", Format::I, kOpImm, 2, 0, 0, 0},
    {"sltiu", Format::I, kOpImm, 3, 0, 0, 0},
    {"xori", Format::I, kOpImm, 4, 0, 0, 0},
    {"ori", Format::I, kOpImm, 6, 0, 0, 0},
    {"andi", Format::I, kOpImm, 7, 0, 0, 0},
    {"slli", Format::I, kOpImm, 1, 0x00, 0, 0},
    {"srli", Format::I, kOpImm, 5, 0x00, 0, 0},
    {"srai", Format::I, kOpImm, 5, 0x20, 0, 0},
    {"add", Format::R, kOpReg, 0, 0x00, 0, 0},
    {"sub", Format::R, kOpReg, 0, 0x20, 0, 0},
    {"sll", Format::R, kOpReg, 1, 0x00, 0, 0},
    {"slt", Format::R, kOpReg, 2, 0x00, 0, 0},
    {"sltu", Format::R, kOpReg, 3, 0x00, 0, 0},
    {"xor", Format::R, kOpReg, 4, 0x00, 0, 0},
    {"srl", Format::R, kOpReg, 5, 0x00, 0, 0},
    {"sra", Format::R, kOpReg, 5, 0x20, 0, 0},
    {"or", Format::R, kOpReg, 6, 0x00, 0, 0},
    {"and", Format::R, kOpReg, 7, 0x00, 0, 0},
    {"fence", Format::I, kOpMiscMem, 0, 0, kOpaque, 0},
    {"ecall", Format::I, kOpSystem, 0, 0, kCtrl | kOpaque, 0},
    {"ebreak", Format::I, kOpSystem, 0, 0, kCtrl | kOpaque, 0},
    {"csrrw", Format::I, kOpSystem, 1, 0, kOpaque, 0},
    {"csrrs", Format::I, kOpSystem, 2, 0, kOpaque, 0},
    {"csrrc", Format::I, kOpSystem, 3, 0, kOpaque, 0},
    {"csrrwi", Format::I, kOpSystem, 5, 0, kOpaque | kCsrImm, 0},
    {"csrrsi", Format::I, kOpSystem, 6, 0, kOpaque | kCsrImm, 0},
    {"csrrci", Format::I, kOpSystem, 7, 0, kOpaque | kCsrImm, 0},
}};

const MnemonicInfo& info(Mnemonic m) {
  return kInfo[static_cast<size_t>(m)];
}

int32_t imm_i(uint32_t w) { return static_cast<int32_t>(w) >> 20; }

int32_t imm_s(uint32_t w) {
  return ((static_cast<int32_t>(w) >> 25) << 5) |
         static_cast<int32_t>((w >> 7) & 0x1F);
}

int32_t imm_b(uint32_t w) {
  int32_t imm = ((static_cast<int32_t>(w) >> 31) << 12);
  imm |= static_cast<int32_t>(((w >> 25) & 0x3F) << 5);
  imm |= static_cast<int32_t>(((w >> 8) & 0x0F) << 1);
  imm |= static_cast<int32_t>(((w >> 7) & 0x01) << 11);
  return imm;
}

int32_t imm_j(uint32_t w) {
  int32_t imm = ((static_cast<int32_t>(w) >> 31) << 20);
  imm |= static_cast<int32_t>(((w >> 21) & 0x3FF) << 1);
  imm |= static_cast<int32_t>(((w >> 20) & 0x01) << 11);
  imm |= static_cast<int32_t>(((w >> 12) & 0xFF) << 12);
  return imm;
}

Instruction make(Mnemonic m, uint32_t w, uint64_t addr) {
  Instruction ins;
  ins.address = addr;
  ins.raw = w;
  ins.mnemonic = m;
  ins.format = info(m).fmt;
  uint8_t rd = (w >> 7) & 0x1F;
  uint8_t rs1 = (w >> 15) & 0x1F;
  uint8_t rs2 = (w >> 20) & 0x1F;
  switch (ins.format) {
    case Format::R:
      ins.rd = rd;
      ins.rs1 = rs1;
      ins.rs2 = rs2;
      break;
    case Format::I:
      ins.rd = rd;
      ins.rs1 = rs1;
      ins.imm = imm_i(w);
      break;
    case Format::S:
      ins.rs1 = rs1;
      ins.rs2 = rs2;
      ins.imm = imm_s(w);
      break;
    case Format::B:
      ins.rs1 = rs1;
      ins.rs2 = rs2;
      ins.imm = imm_b(w);
      break;
    case Format::U:
      ins.rd = rd;
      ins.imm = static_cast<int32_t>(w >> 12);
      break;
    case Format::J:
      ins.rd = rd;
      ins.imm = imm_j(w);
      break;
  }
  return ins;
}

uint32_t field(std::optional<uint8_t> v) { return v.value_or(0) & 0x1F; }

}  // namespace

std::optional<Instruction> decode(uint32_t word, uint64_t address) {
  if (word == 0) return std::nullopt;  // defined illegal by the ISA
  if ((word & 0x3) != 0x3) return std::nullopt;  // 16-bit compressed form
  if (((word >> 2) & 0x7) == 0x7) return std::nullopt;  // >32-bit encoding
  const uint8_t opcode = word & 0x7F;
  const uint8_t f3 = (word >> 12) & 0x7;
  const uint8_t f7 = (word >> 25) & 0x7F;

  switch (opcode) {
    case kOpLui:
      return make(Mnemonic::Lui, word, address);
    case kOpAuipc:
      return make(Mnemonic::Auipc, word, address);
    case kOpJal:
      return make(Mnemonic::Jal, word, address);
    case kOpJalr:
      if (f3 != 0) return std::nullopt;
      return make(Mnemonic::Jalr, word, address);
    case kOpBranch:
      switch (f3) {
        case 0: return make(Mnemonic::Beq, word, address);
        case 1: return make(Mnemonic::Bne, word, address);
        case 4: return make(Mnemonic::Blt, word, address);
        case 5: return make(Mnemonic::Bge, word, address);
        case 6: return make(Mnemonic::Bltu, word, address);
        case 7: return make(Mnemonic::Bgeu, word, address);
        default: return std::nullopt;
      }
    case kOpLoad:
      switch (f3) {
        case 0: return make(Mnemonic::Lb, word, address);
        case 1: return make(Mnemonic::Lh, word, address);
        case 2: return make(Mnemonic::Lw, word, address);
        case 4: return make(Mnemonic::Lbu, word, address);
        case 5: return make(Mnemonic::Lhu, word, address);
        default: return std::nullopt;
      }
    case kOpStore:
      switch (f3) {
        case 0: return make(Mnemonic::Sb, word, address);
        case 1: return make(Mnemonic::Sh, word, address);
        case 2: return make(Mnemonic::Sw, word, address);
        default: return std::nullopt;
      }
    case kOpImm:
      switch (f3) {
        case 0: return make(Mnemonic::Addi, word, address);
        case 2: return make(Mnemonic::Slti, word, address);
        case 3: return make(Mnemonic::Sltiu, word, address);
        case 4: return make(Mnemonic::Xori, word, address);
        case 6: return make(Mnemonic::Ori, word, address);
        case 7: return make(Mnemonic::Andi, word, address);
        case 1: {
          if (f7 != 0x00) return std::nullopt;
          Instruction ins = make(Mnemonic::Slli, word, address);
          ins.imm = static_cast<int32_t>((word >> 20) & 0x1F);
          return ins;
        }
        case 5: {
          if (f7 != 0x00 && f7 != 0x20) return std::nullopt;
          Instruction ins = make(f7 == 0x20 ? Mnemonic::Srai : Mnemonic::Srli,
                                 word, address);
          ins.imm = static_cast<int32_t>((word >> 20) & 0x1F);
          return ins;
        }
        default: return std::nullopt;
      }
    case kOpReg: {
      for (Mnemonic m : {Mnemonic::Add, Mnemonic::Sub, Mnemonic::Sll,
                         Mnemonic::Slt, Mnemonic::Sltu, Mnemonic::Xor,
                         Mnemonic::Srl, Mnemonic::Sra, Mnemonic::Or,
                         Mnemonic::And}) {
        if (info(m).funct3 == f3 && info(m).funct7 == f7)
          return make(m, word, address);
      }
      return std::nullopt;
    }
    case kOpMiscMem: {
      if (f3 != 0) return std::nullopt;  // fence.i and friends: extensions
      Instruction ins = make(Mnemonic::Fence, word, address);
      ins.imm = static_cast<int32_t>((word >> 20) & 0xFFF);
      return ins;
    }
    case kOpSystem: {
      if (f3 == 0) {
        // Only ECALL/EBREAK from the SYSTEM funct3=0 space; privileged
        // returns and WFI are out of scope.
        if (word == 0x00000073) return make(Mnemonic::Ecall, word, address);
        if (word == 0x00100073) {
          Instruction ins = make(Mnemonic::Ebreak, word, address);
          ins.imm = 1;
          return ins;
        }
        return std::nullopt;
      }
      Mnemonic m;
      switch (f3) {
        case 1: m = Mnemonic::Csrrw; break;
        case 2: m = Mnemonic::Csrrs; break;
        case 3: m = Mnemonic::Csrrc; break;
        case 5: m = Mnemonic::Csrrwi; break;
        case 6: m = Mnemonic::Csrrsi; break;
        case 7: m = Mnemonic::Csrrci; break;
        default: return std::nullopt;
      }
      Instruction ins = make(m, word, address);
      ins.imm = static_cast<int32_t>((word >> 20) & 0xFFF);  // CSR index
      return ins;
    }
    default:
      return std::nullopt;
  }
}

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw EncodeError(msg);
}

void check_reg(const std::optional<uint8_t>& r, const char* which) {
  if (!r.has_value()) throw EncodeError(std::string("missing operand ") + which);
  if (*r > 31) throw EncodeError(std::string("register out of range: ") + which);
}

}  // namespace

uint32_t encode(const Instruction& ins) {
  const MnemonicInfo& mi = info(ins.mnemonic);
  uint32_t w = mi.opcode;

  auto imm_required = [&]() -> int32_t {
    if (!ins.imm.has_value()) throw EncodeError("missing immediate");
    return *ins.imm;
  };

  switch (mi.fmt) {
    case Format::R: {
      check_reg(ins.rd, "rd");
      check_reg(ins.rs1, "rs1");
      check_reg(ins.rs2, "rs2");
      w |= field(ins.rd) << 7;
      w |= static_cast<uint32_t>(mi.funct3) << 12;
      w |= field(ins.rs1) << 15;
      w |= field(ins.rs2) << 20;
      w |= static_cast<uint32_t>(mi.funct7) << 25;
      return w;
    }
    case Format::I: {
      if (ins.mnemonic == Mnemonic::Ecall) return 0x00000073;
      if (ins.mnemonic == Mnemonic::Ebreak) return 0x00100073;
      check_reg(ins.rd, "rd");
      check_reg(ins.rs1, "rs1");
      int32_t imm = imm_required();
      uint32_t immfield;
      if (ins.mnemonic == Mnemonic::Slli || ins.mnemonic == Mnemonic::Srli ||
          ins.mnemonic == Mnemonic::Srai) {
        require(imm >= 0 && imm <= 31, "shift amount exceeds 5 bits");
        immfield = static_cast<uint32_t>(imm) |
                   (static_cast<uint32_t>(mi.funct7) << 5);
      } else if (is_csr(ins.mnemonic)) {
        require(imm >= 0 && imm <= 0xFFF, "csr index exceeds 12 bits");
        immfield = static_cast<uint32_t>(imm);
        if (mi.flags & kCsrImm)
          require(*ins.rs1 <= 31, "csr uimm exceeds 5 bits");
      } else if (ins.mnemonic == Mnemonic::Fence) {
        require(imm >= 0 && imm <= 0xFFF, "fence bits exceed 12 bits");
        immfield = static_cast<uint32_t>(imm);
      } else {
        require(imm >= -2048 && imm <= 2047, "I-type immediate out of range");
        immfield = static_cast<uint32_t>(imm) & 0xFFF;
      }
      w |= field(ins.rd) << 7;
      w |= static_cast<uint32_t>(mi.funct3) << 12;
      w |= field(ins.rs1) << 15;
      w |= immfield << 20;
      return w;
    }
    case Format::S: {
      check_reg(ins.rs1, "rs1");
      check_reg(ins.rs2, "rs2");
      int32_t imm = imm_required();
      require(imm >= -2048 && imm <= 2047, "S-type immediate out of range");
      uint32_t u = static_cast<uint32_t>(imm) & 0xFFF;
      w |= (u & 0x1F) << 7;
      w |= static_cast<uint32_t>(mi.funct3) << 12;
      w |= field(ins.rs1) << 15;
      w |= field(ins.rs2) << 20;
      w |= (u >> 5) << 25;
      return w;
    }
    case Format::B: {
      check_reg(ins.rs1, "rs1");
      check_reg(ins.rs2, "rs2");
      int32_t imm = imm_required();
      require(imm >= -4096 && imm <= 4094, "B-type immediate out of range");
      require((imm & 1) == 0, "B-type immediate must be even");
      uint32_t u = static_cast<uint32_t>(imm);
      w |= ((u >> 11) & 0x1) << 7;
      w |= ((u >> 1) & 0xF) << 8;
      w |= static_cast<uint32_t>(mi.funct3) << 12;
      w |= field(ins.rs1) << 15;
      w |= field(ins.rs2) << 20;
      w |= ((u >> 5) & 0x3F) << 25;
      w |= ((u >> 12) & 0x1) << 31;
      return w;
    }
    case Format::U: {
      check_reg(ins.rd, "rd");
      int32_t imm = imm_required();
      require(imm >= 0 && imm <= 0xFFFFF, "U-type immediate exceeds 20 bits");
      w |= field(ins.rd) << 7;
      w |= static_cast<uint32_t>(imm) << 12;
      return w;
    }
    case Format::J: {
      check_reg(ins.rd, "rd");
      int32_t imm = imm_required();
      require(imm >= -1048576 && imm <= 1048574,
              "J-type immediate out of range");
      require((imm & 1) == 0, "J-type immediate must be even");
      uint32_t u = static_cast<uint32_t>(imm);
      w |= field(ins.rd) << 7;
      w |= ((u >> 12) & 0xFF) << 12;
      w |= ((u >> 11) & 0x1) << 20;
      w |= ((u >> 1) & 0x3FF) << 21;
      w |= ((u >> 20) & 0x1) << 31;
      return w;
    }
  }
  throw EncodeError("unreachable format");
}

uint64_t jalr_target(uint64_t rs1_value, int32_t imm, Xlen xlen) {
  uint64_t target = rs1_value + static_cast<uint64_t>(static_cast<int64_t>(imm));
  target &= ~1ull;
  return target & xlen_mask(xlen);
}

const char* mnemonic_name(Mnemonic m) { return info(m).name; }
Format mnemonic_format(Mnemonic m) { return info(m).fmt; }
bool is_control_transfer(Mnemonic m) { return info(m).flags & kCtrl; }
bool is_opaque(Mnemonic m) { return info(m).flags & kOpaque; }
bool is_load(Mnemonic m) { return info(m).flags & kLoad; }
bool is_store(Mnemonic m) { return info(m).flags & kStore; }
bool is_branch(Mnemonic m) { return info(m).flags & kBranch; }
bool is_csr(Mnemonic m) {
  return m >= Mnemonic::Csrrw && m <= Mnemonic::Csrrci;
}
unsigned access_width(Mnemonic m) { return info(m).width; }

namespace {

std::string fence_set(uint32_t bits) {
  std::string s;
  if (bits & 8) s += 'i';
  if (bits & 4) s += 'o';
  if (bits & 2) s += 'r';
  if (bits & 1) s += 'w';
  return s.empty() ? "0" : s;
}

std::string hex(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string to_string(const Instruction& ins) {
  const std::string name = mnemonic_name(ins.mnemonic);
  switch (ins.mnemonic) {
    case Mnemonic::Ecall:
    case Mnemonic::Ebreak:
      return name;
    case Mnemonic::Fence: {
      uint32_t bits = static_cast<uint32_t>(ins.imm.value_or(0));
      if ((bits & 0xFF) == 0xFF) return name;
      return name + " " + fence_set((bits >> 4) & 0xF) + ", " +
             fence_set(bits & 0xF);
    }
    case Mnemonic::Lui:
    case Mnemonic::Auipc:
      return name + " " + reg_name(*ins.rd) + ", " +
             hex(static_cast<uint32_t>(*ins.imm));
    case Mnemonic::Jal:
      return name + " " + reg_name(*ins.rd) + ", " +
             hex((ins.address + static_cast<int64_t>(*ins.imm)) &
                 0xFFFFFFFFull);
    default:
      break;
  }
  if (is_branch(ins.mnemonic)) {
    return name + " " + reg_name(*ins.rs1) + ", " + reg_name(*ins.rs2) + ", " +
           hex((ins.address + static_cast<int64_t>(*ins.imm)) & 0xFFFFFFFFull);
  }
  if (is_load(ins.mnemonic) || ins.mnemonic == Mnemonic::Jalr) {
    return name + " " + reg_name(*ins.rd) + ", " + std::to_string(*ins.imm) +
           "(" + reg_name(*ins.rs1) + ")";
  }
  if (is_store(ins.mnemonic)) {
    return name + " " + reg_name(*ins.rs2) + ", " + std::to_string(*ins.imm) +
           "(" + reg_name(*ins.rs1) + ")";
  }
  if (is_csr(ins.mnemonic)) {
    std::string src = (info(ins.mnemonic).flags & kCsrImm)
                          ? std::to_string(*ins.rs1)
                          : std::string(reg_name(*ins.rs1));
    return name + " " + reg_name(*ins.rd) + ", " +
           hex(static_cast<uint32_t>(*ins.imm)) + ", " + src;
  }
  switch (ins.format) {
    case Format::R:
      return name + " " + reg_name(*ins.rd) + ", " + reg_name(*ins.rs1) +
             ", " + reg_name(*ins.rs2);
    case Format::I:
      return name + " " + reg_name(*ins.rd) + ", " + reg_name(*ins.rs1) +
             ", " + std::to_string(*ins.imm);
    default:
      return name;
  }
}

}  // namespace jopkit
