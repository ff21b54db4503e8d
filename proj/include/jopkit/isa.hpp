#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace jopkit {

// Register width. All address and register arithmetic wraps modulo 2^width.
enum class Xlen : uint8_t { Rv32 = 32, Rv64 = 64 };

constexpr unsigned xlen_bits(Xlen x) { return static_cast<unsigned>(x); }
constexpr uint64_t xlen_mask(Xlen x) {
  return x == Xlen::Rv64 ? ~0ull : 0xFFFFFFFFull;
}
constexpr unsigned xlen_bytes(Xlen x) { return xlen_bits(x) / 8; }

enum class Mnemonic : uint8_t {
  Lui, Auipc, Jal, Jalr,
  Beq, Bne, Blt, Bge, Bltu, Bgeu,
  Lb, Lh, Lw, Lbu, Lhu,
  Sb, Sh, Sw,
  Addi, Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai,
  Add, Sub, Sll, Slt, Sltu, Xor, Srl, Sra, Or, And,
  Fence, Ecall, Ebreak,
  Csrrw, Csrrs, Csrrc, Csrrwi, Csrrsi, Csrrci,
};

constexpr size_t kMnemonicCount = static_cast<size_t>(Mnemonic::Csrrci) + 1;

enum class Format : uint8_t { R, I, S, B, U, J };

// One decoded 32-bit RV32I instruction. Operand presence follows the format:
//   R: rd,rs1,rs2   I: rd,rs1,imm   S/B: rs1,rs2,imm   U/J: rd,imm
// Conventions: U-type imm holds the raw 20-bit field (0..0xFFFFF); the
// CSR index is carried in imm (0..4095) and csr*i immediates carry the
// 5-bit uimm in the rs1 slot; FENCE keeps fm/pred/succ packed in imm.
struct Instruction {
  uint64_t address = 0;
  uint32_t raw = 0;
  Mnemonic mnemonic = Mnemonic::Addi;
  Format format = Format::I;
  std::optional<uint8_t> rd;
  std::optional<uint8_t> rs1;
  std::optional<uint8_t> rs2;
  std::optional<int32_t> imm;

  bool same_fields(const Instruction& o) const {
    return mnemonic == o.mnemonic && format == o.format && rd == o.rd &&
           rs1 == o.rs1 && rs2 == o.rs2 && imm == o.imm;
  }
};

class EncodeError : public std::runtime_error {
 public:
  explicit EncodeError(const std::string& what) : std::runtime_error(what) {}
};

// Returns the unique RV32I instruction encoded by `word`, or nullopt for
// anything outside the supported subset: the all-zero word, 16-bit
// compressed forms (low bits != 0b11), wider-than-32-bit encodings, and
// every extension opcode (floating point, atomic, multiply, ...).
std::optional<Instruction> decode(uint32_t word, uint64_t address = 0);

// Inverse of decode. Throws EncodeError when an operand is missing for the
// format or an immediate exceeds the format's width.
uint32_t encode(const Instruction& ins);

// JALR semantics: rs1 + sign-extended 12-bit immediate, least-significant
// bit cleared, wrapped to the register width.
uint64_t jalr_target(uint64_t rs1_value, int32_t imm, Xlen xlen = Xlen::Rv32);

const char* mnemonic_name(Mnemonic m);
Format mnemonic_format(Mnemonic m);

// JAL, JALR, conditional branches, ECALL and EBREAK end a linear window.
bool is_control_transfer(Mnemonic m);
// FENCE, CSR accesses, ECALL and EBREAK have effects the register/memory
// summary cannot capture.
bool is_opaque(Mnemonic m);
bool is_load(Mnemonic m);
bool is_store(Mnemonic m);
bool is_branch(Mnemonic m);
bool is_csr(Mnemonic m);
// Byte width of the memory access performed by a load/store mnemonic.
unsigned access_width(Mnemonic m);

// objdump-flavoured rendering, no pseudo-instruction aliases:
// "addi a0, zero, 1", "lw a1, 8(s1)", "jalr zero, 0(a3)". Branch and jump
// targets are rendered as absolute hex addresses.
std::string to_string(const Instruction& ins);

}  // namespace jopkit
