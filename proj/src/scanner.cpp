#include <algorithm>

#include "jopkit/gadgets.hpp"

namespace jopkit {

const char* family_name(Family f) {
  switch (f) {
    case Family::ArithmeticLogic: return "arithmetic-logic";
    case Family::MemoryAccess: return "memory-access";
    case Family::FunctionCall: return "function-call";
    case Family::SystemCall: return "system-call";
    case Family::Branching: return "branching";
    case Family::Dispatcher: return "dispatcher";
    case Family::Initializer: return "initializer";
    case Family::Unclassified: return "unclassified";
  }
  return "?";
}

std::optional<Family> family_from_name(std::string_view name) {
  for (Family f : {Family::ArithmeticLogic, Family::MemoryAccess,
                   Family::FunctionCall, Family::SystemCall, Family::Branching,
                   Family::Dispatcher, Family::Initializer,
                   Family::Unclassified}) {
    if (name == family_name(f)) return f;
  }
  return std::nullopt;
}

GadgetSummary summarize(const std::vector<Instruction>& window) {
  GadgetSummary s;
  for (const Instruction& ins : window) {
    const bool csr_uimm = is_csr(ins.mnemonic) &&
                          (ins.mnemonic == Mnemonic::Csrrwi ||
                           ins.mnemonic == Mnemonic::Csrrsi ||
                           ins.mnemonic == Mnemonic::Csrrci);
    if (ins.rs1 && !csr_uimm) s.regs_read |= reg_bit(*ins.rs1);
    if (ins.rs2) s.regs_read |= reg_bit(*ins.rs2);
    if (ins.rd && *ins.rd != 0 && ins.mnemonic != Mnemonic::Fence)
      s.regs_written |= reg_bit(*ins.rd);

    if (is_load(ins.mnemonic)) {
      s.mem_reads.push_back({*ins.rs1, *ins.imm,
                             static_cast<uint8_t>(access_width(ins.mnemonic)),
                             *ins.rd});
    } else if (is_store(ins.mnemonic)) {
      s.mem_writes.push_back({*ins.rs1, *ins.imm,
                              static_cast<uint8_t>(access_width(ins.mnemonic)),
                              *ins.rs2});
    }
    if (is_opaque(ins.mnemonic)) s.has_opaque_effect = true;
  }
  if (!window.empty() && window.back().mnemonic == Mnemonic::Jalr) {
    const Instruction& t = window.back();
    s.terminator = {t.rd.value_or(0), t.rs1.value_or(0), t.imm.value_or(0)};
  }
  s.regs_read &= ~reg_bit(0);
  s.regs_written &= ~reg_bit(0);
  return s;
}

ConstState eval_window(const std::vector<Instruction>& window,
                       const ElfImage* image, Xlen xlen, ConstState init) {
  ConstState st = init;
  const uint64_t mask = xlen_mask(xlen);

  auto get = [&](std::optional<uint8_t> r) -> std::optional<uint64_t> {
    if (!r) return std::nullopt;
    return st.regs[*r];
  };
  auto set = [&](std::optional<uint8_t> r, std::optional<uint64_t> v) {
    if (!r || *r == 0) return;
    if (v)
      st.regs[*r] = *v & mask;
    else
      st.regs[*r] = std::nullopt;
  };
  auto sext = [&](uint64_t v) {
    return xlen == Xlen::Rv32
               ? static_cast<uint64_t>(
                     static_cast<int64_t>(static_cast<int32_t>(v)))
               : v;
  };

  for (const Instruction& ins : window) {
    const auto a = get(ins.rs1);
    const auto b = get(ins.rs2);
    const int32_t imm = ins.imm.value_or(0);
    const unsigned shmax = xlen_bits(xlen) - 1;

    switch (ins.mnemonic) {
      case Mnemonic::Lui:
        set(ins.rd, static_cast<uint64_t>(static_cast<int64_t>(
                        static_cast<int32_t>(static_cast<uint32_t>(imm)
                                             << 12))));
        break;
      case Mnemonic::Auipc:
        set(ins.rd,
            ins.address + static_cast<uint64_t>(static_cast<int64_t>(
                              static_cast<int32_t>(static_cast<uint32_t>(imm)
                                                   << 12))));
        break;
      case Mnemonic::Addi:
        set(ins.rd, a ? std::optional(*a + static_cast<int64_t>(imm))
                      : std::nullopt);
        break;
      case Mnemonic::Xori:
        set(ins.rd, a ? std::optional(*a ^ static_cast<uint64_t>(
                                               static_cast<int64_t>(imm)))
                      : std::nullopt);
        break;
      case Mnemonic::Ori:
        set(ins.rd, a ? std::optional(*a | static_cast<uint64_t>(
                                               static_cast<int64_t>(imm)))
                      : std::nullopt);
        break;
      case Mnemonic::Andi:
        set(ins.rd, a ? std::optional(*a & static_cast<uint64_t>(
                                               static_cast<int64_t>(imm)))
                      : std::nullopt);
        break;
      case Mnemonic::Slti:
        set(ins.rd, a ? std::optional(static_cast<int64_t>(sext(*a)) <
                                              static_cast<int64_t>(imm)
                                          ? 1
                                          : 0)
                      : std::nullopt);
        break;
      case Mnemonic::Sltiu:
        set(ins.rd,
            a ? std::optional((*a & mask) <
                                      (static_cast<uint64_t>(
                                           static_cast<int64_t>(imm)) &
                                       mask)
                                  ? 1
                                  : 0)
              : std::nullopt);
        break;
      case Mnemonic::Slli:
        set(ins.rd, a ? std::optional(*a << (static_cast<unsigned>(imm) &
                                             shmax))
                      : std::nullopt);
        break;
      case Mnemonic::Srli:
        set(ins.rd, a ? std::optional((*a & mask) >>
                                      (static_cast<unsigned>(imm) & shmax))
                      : std::nullopt);
        break;
      case Mnemonic::Srai:
        set(ins.rd,
            a ? std::optional(static_cast<uint64_t>(
                    static_cast<int64_t>(sext(*a)) >>
                    (static_cast<unsigned>(imm) & shmax)))
              : std::nullopt);
        break;
      case Mnemonic::Add:
        set(ins.rd, a && b ? std::optional(*a + *b) : std::nullopt);
        break;
      case Mnemonic::Sub:
        set(ins.rd, a && b ? std::optional(*a - *b) : std::nullopt);
        break;
      case Mnemonic::Xor:
        set(ins.rd, a && b ? std::optional(*a ^ *b) : std::nullopt);
        break;
      case Mnemonic::Or:
        set(ins.rd, a && b ? std::optional(*a | *b) : std::nullopt);
        break;
      case Mnemonic::And:
        set(ins.rd, a && b ? std::optional(*a & *b) : std::nullopt);
        break;
      case Mnemonic::Sll:
        set(ins.rd, a && b ? std::optional(*a << (*b & shmax)) : std::nullopt);
        break;
      case Mnemonic::Srl:
        set(ins.rd,
            a && b ? std::optional((*a & mask) >> (*b & shmax)) : std::nullopt);
        break;
      case Mnemonic::Sra:
        set(ins.rd, a && b
                        ? std::optional(static_cast<uint64_t>(
                              static_cast<int64_t>(sext(*a)) >> (*b & shmax)))
                        : std::nullopt);
        break;
      case Mnemonic::Slt:
        set(ins.rd, a && b ? std::optional(static_cast<int64_t>(sext(*a)) <
                                                   static_cast<int64_t>(
                                                       sext(*b))
                                               ? 1
                                               : 0)
                           : std::nullopt);
        break;
      case Mnemonic::Sltu:
        set(ins.rd, a && b ? std::optional((*a & mask) < (*b & mask) ? 1 : 0)
                           : std::nullopt);
        break;
      case Mnemonic::Lb:
      case Mnemonic::Lh:
      case Mnemonic::Lw:
      case Mnemonic::Lbu:
      case Mnemonic::Lhu: {
        std::optional<uint64_t> v;
        if (a && image && !st.store_seen) {
          const uint64_t addr = (*a + static_cast<int64_t>(imm)) & mask;
          const unsigned width = access_width(ins.mnemonic);
          uint64_t acc = 0;
          bool ok = true;
          for (unsigned i = 0; i < width && ok; ++i) {
            auto byte = image->byte_at(addr + i);
            if (byte)
              acc |= static_cast<uint64_t>(*byte) << (8 * i);
            else
              ok = false;
          }
          if (ok) {
            if (ins.mnemonic == Mnemonic::Lb || ins.mnemonic == Mnemonic::Lh ||
                ins.mnemonic == Mnemonic::Lw) {
              const unsigned bits = width * 8;
              if (acc & (1ull << (bits - 1))) acc |= ~((1ull << bits) - 1);
            }
            v = acc;
          }
        }
        set(ins.rd, v);
        break;
      }
      case Mnemonic::Sb:
      case Mnemonic::Sh:
      case Mnemonic::Sw:
        st.store_seen = true;
        break;
      case Mnemonic::Jal:
      case Mnemonic::Jalr:
        set(ins.rd, ins.address + 4);
        break;
      default:
        // Branches transfer no data; opaque instructions may write rd in
        // ways this propagation does not model.
        set(ins.rd, std::nullopt);
        break;
    }
  }
  return st;
}

std::vector<std::pair<uint64_t, Instruction>> find_terminators(
    const ElfImage& image) {
  std::vector<std::pair<uint64_t, Instruction>> out;
  for (const Section* sec : image.exec_sections()) {
    uint64_t addr = (sec->addr + 3) & ~3ull;
    for (; addr + 4 <= sec->addr + sec->size(); addr += 4) {
      auto w = image.word_at(addr);
      if (!w) continue;
      auto ins = decode(*w, addr);
      if (ins && ins->mnemonic == Mnemonic::Jalr) out.emplace_back(addr, *ins);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::vector<GadgetCandidate> extract_candidates(const ElfImage& image,
                                                uint64_t terminator_addr,
                                                unsigned max_len) {
  std::vector<GadgetCandidate> out;
  const Section* sec = image.section_at(terminator_addr);
  if (!sec || !sec->exec) return out;

  auto term_word = image.word_at(terminator_addr);
  if (!term_word) return out;
  auto term = decode(*term_word, terminator_addr);
  if (!term || term->mnemonic != Mnemonic::Jalr) return out;

  std::vector<Instruction> window{*term};
  for (unsigned len = 1; len <= max_len; ++len) {
    if (len > 1) {
      const uint64_t first = terminator_addr - (len - 1) * 4;
      if (first < sec->addr || first > terminator_addr) break;
      auto w = image.word_at(first);
      if (!w) break;
      auto ins = decode(*w, first);
      if (!ins || is_control_transfer(ins->mnemonic)) break;
      window.insert(window.begin(), *ins);
    }
    GadgetCandidate cand;
    cand.start_addr = window.front().address;
    cand.instructions = window;
    cand.summary = summarize(window);
    out.push_back(std::move(cand));
  }
  return out;
}

Family classify(const GadgetCandidate& cand, const ElfImage& image,
                const SyscallConvention& conv) {
  const GadgetSummary& s = cand.summary;

  if (mask_has(s.regs_written, conv.id_register)) return Family::SystemCall;

  for (const MemEffect& r : s.mem_reads) {
    if (r.reg == s.terminator.rs1) return Family::Dispatcher;
  }
  if (!s.mem_reads.empty() || !s.mem_writes.empty())
    return Family::MemoryAccess;

  for (size_t i = 0; i + 1 < cand.instructions.size(); ++i) {
    const Instruction& ins = cand.instructions[i];
    const bool alu = ins.format == Format::R ||
                     (ins.format == Format::I && !is_load(ins.mnemonic) &&
                      !is_csr(ins.mnemonic) &&
                      ins.mnemonic != Mnemonic::Jalr &&
                      ins.mnemonic != Mnemonic::Fence &&
                      ins.mnemonic != Mnemonic::Ecall &&
                      ins.mnemonic != Mnemonic::Ebreak) ||
                     ins.mnemonic == Mnemonic::Lui;
    if (alu && ins.rd && abi_role(*ins.rd).role == RegRole::Argument)
      return Family::ArithmeticLogic;
  }

  if (!image.plt_entries().empty()) {
    std::vector<Instruction> prefix(cand.instructions.begin(),
                                    cand.instructions.end() - 1);
    ConstState pre = eval_window(prefix, &image, image.xlen());
    auto rs1 = pre.regs[s.terminator.rs1];
    if (rs1) {
      const uint64_t target =
          jalr_target(*rs1, s.terminator.imm, image.xlen());
      if (image.plt_at(target)) return Family::FunctionCall;
    }
  }

  return Family::Unclassified;
}

namespace {

// Single-stage dispatcher shape inside one window: a constant cursor bump,
// a table-entry load into the jump register, an indirect jump through it,
// and interleaves that touch neither.
std::optional<DispatcherGadget> match_single_stage(
    const GadgetCandidate& cand, uint32_t entry_size) {
  const GadgetSummary& s = cand.summary;
  const auto& ins = cand.instructions;
  if (ins.size() < 3) return std::nullopt;
  if (s.has_opaque_effect) return std::nullopt;
  if (s.terminator.rd != 0 || s.terminator.imm != 0) return std::nullopt;
  const uint8_t jump = s.terminator.rs1;
  if (jump == 0) return std::nullopt;

  int load_idx = -1;
  for (size_t i = 0; i + 1 < ins.size(); ++i) {
    if (is_load(ins[i].mnemonic) && ins[i].rd == jump) {
      if (load_idx >= 0) return std::nullopt;  // one table load only
      load_idx = static_cast<int>(i);
    }
  }
  if (load_idx < 0) return std::nullopt;
  const Instruction& load = ins[load_idx];
  if (access_width(load.mnemonic) != entry_size) return std::nullopt;
  const uint8_t cursor = *load.rs1;
  if (cursor == 0 || cursor == jump) return std::nullopt;

  int bump_idx = -1;
  int32_t stride = 0;
  for (size_t i = 0; i + 1 < ins.size(); ++i) {
    const Instruction& x = ins[i];
    if (x.mnemonic == Mnemonic::Addi && x.rd == cursor && x.rs1 == cursor) {
      if (bump_idx >= 0) return std::nullopt;
      bump_idx = static_cast<int>(i);
      stride = *x.imm;
    }
  }
  if (bump_idx < 0 || stride == 0) return std::nullopt;
  if (stride % static_cast<int32_t>(entry_size) != 0) return std::nullopt;

  // Nothing else may write the cursor or the jump register.
  for (size_t i = 0; i + 1 < ins.size(); ++i) {
    if (static_cast<int>(i) == load_idx || static_cast<int>(i) == bump_idx)
      continue;
    if (ins[i].rd && (*ins[i].rd == cursor || *ins[i].rd == jump))
      return std::nullopt;
  }

  DispatcherGadget d;
  d.kind = DispatcherGadget::Kind::SingleStage;
  d.stage1_addr = cand.start_addr;
  d.table_cursor_reg = cursor;
  d.jump_reg = jump;
  d.stride = stride;
  d.reentry_addr = cand.start_addr;
  d.load_offset = *load.imm;
  d.pre_increment = bump_idx < load_idx;
  d.side_writes =
      s.regs_written & ~(reg_bit(cursor) | reg_bit(jump));
  d.stage1_len = static_cast<uint8_t>(ins.size());
  return d;
}

// Stage 2 of a split dispatcher: load through the cursor, jump through the
// loaded register, no cursor adjustment.
struct Stage2Match {
  uint8_t jump_reg = 0;
  int32_t load_offset = 0;
  uint8_t len = 0;
  uint32_t side_writes = 0;
};

std::optional<Stage2Match> match_stage2(const ElfImage& image, uint64_t addr,
                                        uint8_t cursor, unsigned max_len,
                                        uint32_t entry_size) {
  std::vector<Instruction> win;
  for (unsigned i = 0; i < max_len; ++i) {
    auto w = image.word_at(addr + i * 4);
    if (!w) return std::nullopt;
    auto ins = decode(*w, addr + i * 4);
    if (!ins) return std::nullopt;
    win.push_back(*ins);
    if (ins->mnemonic == Mnemonic::Jalr) break;
    if (is_control_transfer(ins->mnemonic)) return std::nullopt;
  }
  if (win.empty() || win.back().mnemonic != Mnemonic::Jalr)
    return std::nullopt;

  GadgetSummary s = summarize(win);
  if (s.has_opaque_effect) return std::nullopt;
  if (s.terminator.rd != 0 || s.terminator.imm != 0) return std::nullopt;
  const uint8_t jump = s.terminator.rs1;
  if (jump == 0 || jump == cursor) return std::nullopt;

  int load_idx = -1;
  for (size_t i = 0; i + 1 < win.size(); ++i) {
    if (is_load(win[i].mnemonic) && win[i].rd == jump) {
      if (load_idx >= 0) return std::nullopt;
      load_idx = static_cast<int>(i);
    }
  }
  if (load_idx < 0) return std::nullopt;
  const Instruction& load = win[load_idx];
  if (load.rs1 != cursor) return std::nullopt;
  if (access_width(load.mnemonic) != entry_size) return std::nullopt;

  for (size_t i = 0; i + 1 < win.size(); ++i) {
    if (static_cast<int>(i) == load_idx) continue;
    if (win[i].rd && (*win[i].rd == cursor || *win[i].rd == jump))
      return std::nullopt;
  }

  Stage2Match m;
  m.jump_reg = jump;
  m.load_offset = *load.imm;
  m.len = static_cast<uint8_t>(win.size());
  m.side_writes = s.regs_written & ~(reg_bit(cursor) | reg_bit(jump));
  return m;
}

// Stage 1: a constant cursor bump ending in a fixed-offset jump through the
// reserved dispatcher register, which the chain keeps equal to this stage's
// own address.
std::optional<DispatcherGadget> match_two_stage(const GadgetCandidate& cand,
                                                const ElfImage& image,
                                                const ScanOptions& opt,
                                                uint32_t entry_size) {
  const GadgetSummary& s = cand.summary;
  const auto& ins = cand.instructions;
  if (ins.size() < 2) return std::nullopt;
  if (s.has_opaque_effect) return std::nullopt;
  if (s.terminator.rd != 0) return std::nullopt;
  if (s.terminator.rs1 != opt.policy.dispatcher_reg) return std::nullopt;
  if (s.terminator.imm == 0) return std::nullopt;

  int bump_idx = -1;
  int32_t stride = 0;
  for (size_t i = 0; i + 1 < ins.size(); ++i) {
    const Instruction& x = ins[i];
    if (x.mnemonic == Mnemonic::Addi && x.rd == x.rs1 && x.rd &&
        *x.rd != 0 && *x.rd != opt.policy.dispatcher_reg) {
      if (bump_idx >= 0) return std::nullopt;
      bump_idx = static_cast<int>(i);
      stride = *x.imm;
    }
  }
  if (bump_idx < 0 || stride == 0) return std::nullopt;
  if (stride % static_cast<int32_t>(entry_size) != 0) return std::nullopt;
  const uint8_t cursor = *ins[bump_idx].rd;

  for (size_t i = 0; i + 1 < ins.size(); ++i) {
    if (static_cast<int>(i) == bump_idx) continue;
    if (ins[i].rd &&
        (*ins[i].rd == cursor || *ins[i].rd == opt.policy.dispatcher_reg))
      return std::nullopt;
  }
  if (mask_has(s.regs_written, opt.policy.dispatcher_reg)) return std::nullopt;

  const uint64_t stage2 =
      (cand.start_addr + static_cast<int64_t>(s.terminator.imm)) &
      xlen_mask(image.xlen());
  auto m2 = match_stage2(image, stage2, cursor, opt.max_window, entry_size);
  if (!m2) return std::nullopt;

  DispatcherGadget d;
  d.kind = DispatcherGadget::Kind::TwoStage;
  d.stage1_addr = cand.start_addr;
  d.stage2_addr = stage2;
  d.table_cursor_reg = cursor;
  d.jump_reg = m2->jump_reg;
  d.stride = stride;
  const bool reenter_stage1 =
      opt.two_stage_reentry == ScanOptions::Reentry::Stage1;
  d.reentry_addr = reenter_stage1 ? cand.start_addr : stage2;
  d.load_offset = m2->load_offset;
  d.pre_increment = reenter_stage1;
  d.side_writes = (s.regs_written | m2->side_writes) &
                  ~(reg_bit(cursor) | reg_bit(m2->jump_reg));
  d.stage1_len = static_cast<uint8_t>(ins.size());
  d.stage2_len = m2->len;
  return d;
}

}  // namespace

std::vector<DispatcherGadget> find_dispatchers(const ElfImage& image,
                                               const ScanOptions& opt) {
  std::vector<DispatcherGadget> out;
  const uint32_t entry_size = xlen_bytes(image.xlen());
  for (const auto& [addr, term] : find_terminators(image)) {
    for (const GadgetCandidate& cand :
         extract_candidates(image, addr, opt.max_window)) {
      if (auto d = match_single_stage(cand, entry_size)) out.push_back(*d);
      if (auto d = match_two_stage(cand, image, opt, entry_size))
        out.push_back(*d);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const DispatcherGadget& a, const DispatcherGadget& b) {
              if (a.stage1_addr != b.stage1_addr)
                return a.stage1_addr < b.stage1_addr;
              return a.stage1_len < b.stage1_len;
            });
  return out;
}

std::vector<GadgetCandidate> filter_safe(
    const std::vector<GadgetCandidate>& candidates, const ScanOptions& opt,
    const DispatcherGadget& dispatcher) {
  std::vector<GadgetCandidate> out;
  const uint32_t forbidden =
      reg_bit(opt.policy.dispatcher_reg) | reg_bit(opt.policy.table_cursor_reg) |
      reg_bit(dispatcher.table_cursor_reg) | reg_bit(dispatcher.jump_reg);

  for (const GadgetCandidate& c : candidates) {
    if (c.family == Family::Initializer) {
      GadgetCandidate kept = c;
      kept.safe = true;
      out.push_back(std::move(kept));
      continue;
    }
    if (c.summary.regs_written & forbidden) continue;
    if (c.summary.has_opaque_effect) continue;
    if (c.summary.terminator.rs1 != opt.policy.dispatcher_reg) continue;
    GadgetCandidate kept = c;
    if (c.summary.terminator.imm != 0) {
      if (!opt.relax_imm) continue;
      kept.relaxed_imm = c.summary.terminator.imm;
    }
    kept.safe = true;
    out.push_back(std::move(kept));
  }
  return out;
}

std::vector<GadgetCandidate> find_initializers(const ElfImage& image,
                                               const ScanOptions& opt) {
  std::vector<GadgetCandidate> out;
  const uint8_t disp = opt.policy.dispatcher_reg;
  const uint8_t cursor = opt.policy.table_cursor_reg;

  auto attacker_sourced = [&](const std::vector<Instruction>& win,
                              uint8_t reg) {
    // Find the last write to reg; it must pull from memory or from plain
    // argument registers.
    for (auto it = win.rbegin(); it != win.rend(); ++it) {
      const Instruction& ins = *it;
      if (!ins.rd || *ins.rd != reg) continue;
      if (is_load(ins.mnemonic)) return true;
      const bool alu = ins.format == Format::R || ins.format == Format::I;
      if (!alu || is_csr(ins.mnemonic) || ins.mnemonic == Mnemonic::Jalr)
        return false;
      auto arg_sourced = [&](std::optional<uint8_t> r) {
        if (!r) return true;
        return abi_role(*r).role == RegRole::Argument && *r != disp &&
               *r != cursor;
      };
      return arg_sourced(ins.rs1) && arg_sourced(ins.rs2);
    }
    return false;
  };

  for (const auto& [addr, term] : find_terminators(image)) {
    for (const GadgetCandidate& cand :
         extract_candidates(image, addr, opt.max_window)) {
      const GadgetSummary& s = cand.summary;
      if (!mask_has(s.regs_written, disp) ||
          !mask_has(s.regs_written, cursor))
        continue;
      if (s.has_opaque_effect) continue;
      if (s.terminator.rs1 != disp || s.terminator.imm != 0) continue;
      if (s.terminator.rd == disp || s.terminator.rd == cursor) continue;
      if (!attacker_sourced(cand.instructions, disp) ||
          !attacker_sourced(cand.instructions, cursor))
        continue;
      GadgetCandidate init = cand;
      init.family = Family::Initializer;
      init.safe = true;
      out.push_back(std::move(init));
    }
  }
  return out;
}

ScanResult scan_image(const ElfImage& image, const ScanOptions& opt) {
  ScanResult r;
  for (const auto& [addr, term] : find_terminators(image)) {
    for (GadgetCandidate& cand :
         extract_candidates(image, addr, opt.max_window)) {
      cand.family = classify(cand, image, opt.conv);
      r.candidates.push_back(std::move(cand));
    }
  }
  r.dispatchers = find_dispatchers(image, opt);
  r.initializers = find_initializers(image, opt);

  for (GadgetCandidate& c : r.candidates) {
    for (const GadgetCandidate& init : r.initializers) {
      if (c.start_addr == init.start_addr && c.length() == init.length()) {
        c.family = Family::Initializer;
        break;
      }
    }
  }
  return r;
}

}  // namespace jopkit
