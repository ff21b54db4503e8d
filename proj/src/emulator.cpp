#include "jopkit/emulator.hpp"

#include <algorithm>
#include <cstring>

namespace jopkit {

const char* fault_name(FaultKind k) {
  switch (k) {
    case FaultKind::UnmappedAccess: return "unmapped-access";
    case FaultKind::IllegalInstruction: return "illegal-instruction";
    case FaultKind::MisalignedFetch: return "misaligned-fetch";
  }
  return "?";
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::GoalMet: return "goal-met";
    case Outcome::GoalMissed: return "goal-missed";
    case Outcome::Fault: return "fault";
    case Outcome::StepLimit: return "step-limit";
  }
  return "?";
}

std::optional<Outcome> outcome_from_name(std::string_view name) {
  for (Outcome o : {Outcome::GoalMet, Outcome::GoalMissed, Outcome::Fault,
                    Outcome::StepLimit}) {
    if (name == outcome_name(o)) return o;
  }
  return std::nullopt;
}

void Machine::map_image(const ElfImage& image) {
  for (const Section& s : image.sections()) {
    MemRegion r;
    r.name = s.name;
    r.addr = s.addr;
    r.bytes = s.bytes;
    r.writable = s.write;
    mem_.push_back(std::move(r));
  }
}

void Machine::map_region(MemRegion region) {
  mem_.insert(mem_.begin(), std::move(region));
}

const MemRegion* Machine::region_at(uint64_t addr) const {
  for (const MemRegion& r : mem_)
    if (r.contains(addr)) return &r;
  return nullptr;
}

MemRegion* Machine::region_at(uint64_t addr) {
  for (MemRegion& r : mem_)
    if (r.contains(addr)) return &r;
  return nullptr;
}

std::optional<uint8_t> Machine::load8(uint64_t addr) const {
  const MemRegion* r = region_at(addr);
  if (!r) return std::nullopt;
  return r->bytes[addr - r->addr];
}

std::optional<uint32_t> Machine::load32(uint64_t addr) const {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    auto b = load8(addr + i);
    if (!b) return std::nullopt;
    v |= static_cast<uint32_t>(*b) << (8 * i);
  }
  return v;
}

bool Machine::store8(uint64_t addr, uint8_t value) {
  MemRegion* r = region_at(addr);
  if (!r || !r->writable) return false;
  r->bytes[addr - r->addr] = value;
  return true;
}

namespace {

int64_t sext_xlen(uint64_t v, Xlen x) {
  return x == Xlen::Rv32 ? static_cast<int64_t>(static_cast<int32_t>(v))
                         : static_cast<int64_t>(v);
}

}  // namespace

void Machine::step() {
  if (halted()) return;
  const uint64_t mask = xlen_mask(xlen_);
  const uint64_t fpc = pc & mask;

  if (fpc % 4 != 0) {
    fault = Fault{FaultKind::MisalignedFetch, fpc, fpc};
    return;
  }
  auto word = load32(fpc);
  if (!word) {
    fault = Fault{FaultKind::UnmappedAccess, fpc, fpc};
    return;
  }
  auto dec = decode(*word, fpc);
  if (!dec) {
    fault = Fault{FaultKind::IllegalInstruction, fpc, fpc};
    return;
  }
  const Instruction& ins = *dec;

  auto rv = [&](std::optional<uint8_t> r) { return regs[r.value_or(0)]; };
  uint64_t next_pc = fpc + 4;
  std::optional<uint8_t> wreg;
  uint64_t wval = 0;

  auto set = [&](uint8_t rd, uint64_t v) {
    v &= mask;
    if (rd != 0) {
      regs[rd] = v;
      wreg = rd;
      wval = v;
    }
  };

  bool mem_fault = false;
  auto mem_load = [&](uint64_t addr, unsigned width, bool sign) {
    uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
      auto b = load8((addr + i) & mask);
      if (!b) {
        fault = Fault{FaultKind::UnmappedAccess, fpc, (addr + i) & mask};
        mem_fault = true;
        return uint64_t{0};
      }
      v |= static_cast<uint64_t>(*b) << (8 * i);
    }
    if (sign) {
      const unsigned bits = width * 8;
      const uint64_t sbit = 1ull << (bits - 1);
      if (v & sbit) v |= ~((1ull << bits) - 1);
    }
    return v & mask;
  };
  auto mem_store = [&](uint64_t addr, unsigned width, uint64_t v) {
    for (unsigned i = 0; i < width; ++i) {
      if (!store8((addr + i) & mask, static_cast<uint8_t>(v >> (8 * i)))) {
        fault = Fault{FaultKind::UnmappedAccess, fpc, (addr + i) & mask};
        mem_fault = true;
        return;
      }
    }
  };

  const int64_t s1 = sext_xlen(rv(ins.rs1), xlen_);
  const int64_t s2 = sext_xlen(rv(ins.rs2), xlen_);
  const uint64_t u1 = rv(ins.rs1) & mask;
  const uint64_t u2 = rv(ins.rs2) & mask;
  const int32_t imm = ins.imm.value_or(0);
  const unsigned shmax = xlen_bits(xlen_) - 1;

  switch (ins.mnemonic) {
    case Mnemonic::Lui:
      set(*ins.rd, static_cast<uint64_t>(
                       static_cast<int64_t>(static_cast<int32_t>(
                           static_cast<uint32_t>(imm) << 12))));
      break;
    case Mnemonic::Auipc:
      set(*ins.rd,
          fpc + static_cast<uint64_t>(static_cast<int64_t>(
                    static_cast<int32_t>(static_cast<uint32_t>(imm) << 12))));
      break;
    case Mnemonic::Jal:
      set(*ins.rd, fpc + 4);
      next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Jalr: {
      const uint64_t target = jalr_target(u1, imm, xlen_);
      set(*ins.rd, fpc + 4);
      next_pc = target;
      break;
    }
    case Mnemonic::Beq:
      if (u1 == u2) next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Bne:
      if (u1 != u2) next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Blt:
      if (s1 < s2) next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Bge:
      if (s1 >= s2) next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Bltu:
      if (u1 < u2) next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Bgeu:
      if (u1 >= u2) next_pc = (fpc + static_cast<int64_t>(imm)) & mask;
      break;
    case Mnemonic::Lb:
    case Mnemonic::Lh:
    case Mnemonic::Lw:
    case Mnemonic::Lbu:
    case Mnemonic::Lhu: {
      const bool sign = ins.mnemonic != Mnemonic::Lbu &&
                        ins.mnemonic != Mnemonic::Lhu;
      const uint64_t v =
          mem_load((u1 + imm) & mask, access_width(ins.mnemonic), sign);
      if (mem_fault) return;
      set(*ins.rd, v);
      break;
    }
    case Mnemonic::Sb:
      mem_store((u1 + imm) & mask, 1, u2);
      break;
    case Mnemonic::Sh:
      mem_store((u1 + imm) & mask, 2, u2);
      break;
    case Mnemonic::Sw:
      mem_store((u1 + imm) & mask, 4, u2);
      break;
    case Mnemonic::Addi:
      set(*ins.rd, u1 + static_cast<int64_t>(imm));
      break;
    case Mnemonic::Slti:
      set(*ins.rd, s1 < imm ? 1 : 0);
      break;
    case Mnemonic::Sltiu:
      set(*ins.rd,
          u1 < (static_cast<uint64_t>(static_cast<int64_t>(imm)) & mask) ? 1
                                                                         : 0);
      break;
    case Mnemonic::Xori:
      set(*ins.rd, u1 ^ static_cast<uint64_t>(static_cast<int64_t>(imm)));
      break;
    case Mnemonic::Ori:
      set(*ins.rd, u1 | static_cast<uint64_t>(static_cast<int64_t>(imm)));
      break;
    case Mnemonic::Andi:
      set(*ins.rd, u1 & static_cast<uint64_t>(static_cast<int64_t>(imm)));
      break;
    case Mnemonic::Slli:
      set(*ins.rd, u1 << (static_cast<unsigned>(imm) & shmax));
      break;
    case Mnemonic::Srli:
      set(*ins.rd, u1 >> (static_cast<unsigned>(imm) & shmax));
      break;
    case Mnemonic::Srai:
      set(*ins.rd, static_cast<uint64_t>(
                       s1 >> (static_cast<unsigned>(imm) & shmax)));
      break;
    case Mnemonic::Add:
      set(*ins.rd, u1 + u2);
      break;
    case Mnemonic::Sub:
      set(*ins.rd, u1 - u2);
      break;
    case Mnemonic::Sll:
      set(*ins.rd, u1 << (u2 & shmax));
      break;
    case Mnemonic::Slt:
      set(*ins.rd, s1 < s2 ? 1 : 0);
      break;
    case Mnemonic::Sltu:
      set(*ins.rd, u1 < u2 ? 1 : 0);
      break;
    case Mnemonic::Xor:
      set(*ins.rd, u1 ^ u2);
      break;
    case Mnemonic::Srl:
      set(*ins.rd, u1 >> (u2 & shmax));
      break;
    case Mnemonic::Sra:
      set(*ins.rd, static_cast<uint64_t>(s1 >> (u2 & shmax)));
      break;
    case Mnemonic::Or:
      set(*ins.rd, u1 | u2);
      break;
    case Mnemonic::And:
      set(*ins.rd, u1 & u2);
      break;
    case Mnemonic::Fence:
      break;  // ordering has no meaning on a single deterministic hart
    case Mnemonic::Ecall: {
      Trap t;
      t.pc = fpc;
      t.regs = regs;
      trap = t;
      break;
    }
    case Mnemonic::Ebreak:
    case Mnemonic::Csrrw:
    case Mnemonic::Csrrs:
    case Mnemonic::Csrrc:
    case Mnemonic::Csrrwi:
    case Mnemonic::Csrrsi:
    case Mnemonic::Csrrci:
      // No CSR file and no debugger are modeled.
      fault = Fault{FaultKind::IllegalInstruction, fpc, fpc};
      return;
  }

  if (mem_fault) return;

  regs[0] = 0;
  steps_executed++;
  if (trace_enabled) {
    TraceEntry e;
    e.pc = fpc;
    e.raw = *word;
    e.text = to_string(ins);
    e.written_reg = wreg;
    e.written_value = wval;
    trace.push_back(std::move(e));
  }
  if (!trap) pc = next_pc;
}

uint64_t Machine::run(uint64_t max_steps) {
  uint64_t n = 0;
  while (n < max_steps && !halted()) {
    step();
    if (fault) break;
    ++n;
  }
  return n;
}

Verdict execute(const ElfImage& image, const Payload& payload,
                const VulnSpec& vuln, const ChainGoal& goal,
                const ExecOptions& opt) {
  Machine m(image.xlen());
  m.map_image(image);

  MemRegion buf;
  buf.name = "attacker-buffer";
  buf.addr = payload.buffer_addr;
  buf.bytes = payload.buffer_fill;
  buf.bytes.resize(std::max<uint64_t>(vuln.capacity, buf.bytes.size()), 0);
  m.map_region(std::move(buf));

  if (!payload.table_in_buffer && !payload.table_blob.empty()) {
    MemRegion tab;
    tab.name = "attacker-table";
    tab.addr = payload.table_span_addr;
    tab.bytes = payload.table_blob;
    m.map_region(std::move(tab));
  }

  for (const auto& [reg, value] : vuln.call_context) {
    if (reg > 0 && reg < 32) m.regs[reg] = value & xlen_mask(m.xlen());
  }

  Verdict v;
  // The victim's indirect call: fetch the overwritten pointer and jump
  // through it.
  auto ptr = m.load32(payload.buffer_addr + payload.pointer_offset);
  if (!ptr) {
    v.outcome = Outcome::Fault;
    v.fault = Fault{FaultKind::UnmappedAccess, 0,
                    payload.buffer_addr + payload.pointer_offset};
    v.detail = "overwritten pointer is not mapped";
    return v;
  }
  m.pc = jalr_target(*ptr, 0, m.xlen());
  m.trace_enabled = opt.trace;

  m.run(opt.max_steps);

  v.steps = m.steps_executed;
  v.trace = std::move(m.trace);
  v.trap = m.trap;
  v.fault = m.fault;

  if (m.fault) {
    v.outcome = Outcome::Fault;
    v.detail = std::string(fault_name(m.fault->kind)) + " at pc 0x" +
               [&] {
                 char b[32];
                 std::snprintf(b, sizeof b, "%llx",
                               static_cast<unsigned long long>(m.fault->pc));
                 return std::string(b);
               }();
    return v;
  }
  if (!m.trap) {
    v.outcome = Outcome::StepLimit;
    v.detail = "no ecall reached within the step budget";
    return v;
  }

  const auto& regs = m.trap->regs;
  for (const auto& [reg, want] : goal.required_regs) {
    if (reg > 31 || regs[reg] != (want & xlen_mask(m.xlen()))) {
      v.outcome = Outcome::GoalMissed;
      v.detail = std::string("register ") + reg_name(reg) +
                 " differs from the goal at the trap";
      return v;
    }
  }

  if (goal.secret_region) {
    const uint64_t src = regs[kRegA1];
    const uint64_t len = regs[kRegA2];
    for (uint64_t i = 0; i < len; ++i) {
      auto b = m.load8((src + i) & xlen_mask(m.xlen()));
      if (!b) {
        v.outcome = Outcome::GoalMissed;
        v.detail = "modeled write source is not fully mapped";
        return v;
      }
      v.exfiltrated.push_back(*b);
    }
    const SecretRegion& sr = *goal.secret_region;
    bool match = v.exfiltrated.size() == sr.length;
    for (uint64_t i = 0; match && i < sr.length; ++i) {
      auto b = image.byte_at(sr.address + i);
      if (!b || *b != v.exfiltrated[i]) match = false;
    }
    if (!match) {
      v.outcome = Outcome::GoalMissed;
      v.detail = "exfiltrated bytes differ from the secret region";
      return v;
    }
  }

  v.outcome = Outcome::GoalMet;
  v.detail = "trap state satisfies the goal";
  return v;
}

std::vector<TraceSegment> trace_gadgets(
    const Verdict& verdict, const std::vector<GadgetCandidate>& catalog,
    const DispatcherGadget& dispatcher) {
  std::vector<TraceSegment> out;
  const auto& tr = verdict.trace;
  if (tr.empty()) return out;

  auto label_for = [&](uint64_t pc) -> std::string {
    for (const GadgetCandidate& c : catalog) {
      if (c.start_addr == pc) {
        char b[64];
        std::snprintf(b, sizeof b, "%s@0x%llx", family_name(c.family),
                      static_cast<unsigned long long>(pc));
        return b;
      }
    }
    return "unknown code";
  };

  // A segment starts at the trace head and at every dispatcher reentry.
  std::vector<size_t> starts{0};
  for (size_t i = 1; i < tr.size(); ++i) {
    if (tr[i].pc == dispatcher.reentry_addr) starts.push_back(i);
  }
  starts.push_back(tr.size());

  for (size_t k = 0; k + 1 < starts.size(); ++k) {
    TraceSegment seg;
    seg.first_step = starts[k];
    seg.step_count = starts[k + 1] - starts[k];
    seg.start_pc = tr[starts[k]].pc;
    if (k == 0) {
      seg.label = label_for(seg.start_pc);
    } else {
      // The functional gadget begins right after the dispatcher's final
      // indirect jump.
      seg.label = "unknown code";
      for (size_t i = starts[k]; i + 1 < starts[k + 1]; ++i) {
        auto ins = decode(tr[i].raw, tr[i].pc);
        if (ins && ins->mnemonic == Mnemonic::Jalr &&
            ins->rs1 == dispatcher.jump_reg) {
          seg.label = label_for(tr[i + 1].pc);
          break;
        }
      }
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace jopkit
