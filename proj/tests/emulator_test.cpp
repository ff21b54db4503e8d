#include "doctest.h"
#include "jopkit/emulator.hpp"

using namespace jopkit;

namespace {

std::string data_path(const std::string& name) {
  return std::string(JOPKIT_TEST_DATA_DIR) + "/" + name;
}

const ElfImage& fixture() {
  static ElfImage image = ElfImage::load_file(data_path("fixture.elf"));
  return image;
}

Instruction mk(Mnemonic m, std::optional<uint8_t> rd,
               std::optional<uint8_t> rs1, std::optional<uint8_t> rs2,
               std::optional<int32_t> imm) {
  Instruction ins;
  ins.mnemonic = m;
  ins.format = mnemonic_format(m);
  ins.rd = rd;
  ins.rs1 = rs1;
  ins.rs2 = rs2;
  ins.imm = imm;
  return ins;
}

MemRegion code_region(uint64_t addr, const std::vector<Instruction>& prog) {
  MemRegion r;
  r.name = "code";
  r.addr = addr;
  r.writable = false;
  for (const Instruction& ins : prog) {
    const uint32_t w = encode(ins);
    for (int i = 0; i < 4; ++i)
      r.bytes.push_back(static_cast<uint8_t>(w >> (8 * i)));
  }
  return r;
}

Machine boot(uint64_t addr, const std::vector<Instruction>& prog) {
  Machine m;
  m.map_region(code_region(addr, prog));
  m.pc = addr;
  return m;
}

struct Exec {
  Payload payload;
  VulnSpec vuln;
  ChainGoal goal;
  ChainPlan plan;
  std::vector<GadgetCandidate> safe;
  DispatcherGadget dispatcher;
};

const Exec& prepared() {
  static Exec e = [] {
    Exec out;
    ScanOptions opt;
    ScanResult r = scan_image(fixture(), opt);
    out.dispatcher = r.dispatchers[1];
    out.safe = filter_safe(r.candidates, opt, out.dispatcher);
    out.goal.required_regs = {{kRegA0, 1}, {kRegA1, 0x20000}, {kRegA2, 256}};
    out.goal.secret_region = SecretRegion{0x20000, 256};
    out.plan = plan_chain(out.goal, out.safe, out.dispatcher,
                          r.initializers[0], fixture(), opt);
    out.vuln.buffer_addr = 0x30000;
    out.vuln.capacity = 256;
    out.vuln.pointer_offset = 64;
    out.vuln.call_context = {{kRegA0, 0x30000}};
    DispatchTable t =
        build_dispatch_table(out.plan, choose_table_base(out.vuln, 4));
    out.payload = build_payload(out.plan, t, out.vuln);
    return out;
  }();
  return e;
}

}  // namespace

TEST_CASE("machine executes straight-line arithmetic") {
  Machine m = boot(0x1000, {
      mk(Mnemonic::Addi, 10, 0, {}, 5),
      mk(Mnemonic::Addi, 11, 10, {}, -9),
      mk(Mnemonic::Add, 12, 10, 11, {}),
      mk(Mnemonic::Sub, 13, 10, 11, {}),
      mk(Mnemonic::Sltu, 14, 10, 11, {}),
      mk(Mnemonic::Slt, 15, 11, 10, {}),
      mk(Mnemonic::Srai, 16, 11, {}, 1),
      mk(Mnemonic::Srli, 17, 11, {}, 1),
  });
  m.run(8);
  CHECK(m.steps_executed == 8);
  CHECK_FALSE(m.halted());
  CHECK(m.pc == 0x1000 + 32);
  CHECK(m.regs[10] == 5);
  CHECK(m.regs[11] == 0xFFFFFFFC);  // -4 wrapped to rv32
  CHECK(m.regs[12] == 1);
  CHECK(m.regs[13] == 9);
  CHECK(m.regs[14] == 1);           // 5 < 0xFFFFFFFC unsigned
  CHECK(m.regs[15] == 1);           // -4 < 5 signed
  CHECK(m.regs[16] == 0xFFFFFFFE);  // arithmetic shift keeps the sign
  CHECK(m.regs[17] == 0x7FFFFFFE);
}

TEST_CASE("x0 ignores writes") {
  Machine m = boot(0x1000, {
      mk(Mnemonic::Addi, 0, 0, {}, 77),
      mk(Mnemonic::Jal, 0, {}, {}, 4),
  });
  m.run(2);
  CHECK(m.regs[0] == 0);
}

TEST_CASE("loads, stores and region shadowing") {
  Machine m = boot(0x1000, {
      mk(Mnemonic::Lui, 5, {}, {}, 0x2),     // t0 = 0x2000
      mk(Mnemonic::Lw, 6, 5, {}, 0),
      mk(Mnemonic::Lb, 7, 5, {}, 3),
      mk(Mnemonic::Lbu, 28, 5, {}, 3),
      mk(Mnemonic::Sw, {}, 5, 6, 8),
      mk(Mnemonic::Lw, 29, 5, {}, 8),
  });
  MemRegion data;
  data.name = "data";
  data.addr = 0x2000;
  data.bytes = {0x78, 0x56, 0x34, 0xF2, 0, 0, 0, 0, 0, 0, 0, 0};
  m.map_region(data);

  m.run(6);
  REQUIRE_FALSE(m.halted());
  CHECK(m.regs[6] == 0xF2345678);
  CHECK(m.regs[7] == 0xFFFFFFF2);  // lb sign-extends
  CHECK(m.regs[28] == 0xF2);       // lbu does not
  CHECK(m.regs[29] == 0xF2345678);
  CHECK(m.load32(0x2008) == 0xF2345678);

  // A later mapping at the same address wins.
  MemRegion shadow;
  shadow.name = "shadow";
  shadow.addr = 0x2000;
  shadow.bytes = {0xAA, 0xBB, 0xCC, 0xDD};
  m.map_region(shadow);
  CHECK(m.load32(0x2000) == 0xDDCCBBAA);
  CHECK(m.load32(0x2008) == 0xF2345678);  // old region still backs the rest
}

TEST_CASE("branches and jumps move the pc") {
  Machine m = boot(0x1000, {
      mk(Mnemonic::Addi, 10, 0, {}, 1),
      mk(Mnemonic::Beq, {}, 10, 0, 8),   // not taken
      mk(Mnemonic::Bne, {}, 10, 0, 8),   // taken, skips the addi
      mk(Mnemonic::Addi, 10, 0, {}, 99),
      mk(Mnemonic::Jal, 1, {}, {}, 8),   // link, skip one more
      mk(Mnemonic::Addi, 10, 0, {}, 98),
      mk(Mnemonic::Jalr, 5, 1, {}, 0),   // back through the link register
  });
  m.run(5);
  CHECK(m.regs[10] == 1);
  CHECK(m.regs[1] == 0x1014);  // jal at 0x1010 links past itself
  CHECK(m.pc == 0x1014);
  CHECK(m.regs[5] == 0x101C);  // jalr's own link
  m.run(1);
  CHECK(m.regs[10] == 98);
}

TEST_CASE("ecall traps with a register snapshot") {
  Machine m = boot(0x1000, {
      mk(Mnemonic::Addi, 17, 0, {}, 64),
      mk(Mnemonic::Ecall, 0, 0, {}, 0),
      mk(Mnemonic::Addi, 17, 0, {}, 0),  // must never run
  });
  m.run(10);
  CHECK(m.halted());
  REQUIRE(m.trap.has_value());
  CHECK_FALSE(m.fault.has_value());
  CHECK(m.trap->pc == 0x1004);
  CHECK(m.trap->regs[17] == 64);
  CHECK(m.steps_executed == 2);  // the ecall itself counts
  CHECK(m.regs[17] == 64);

  m.step();  // halted machines stay put
  CHECK(m.steps_executed == 2);
}

TEST_CASE("unmodeled instructions fault instead of corrupting state") {
  Machine m = boot(0x1000, {mk(Mnemonic::Ebreak, 0, 0, {}, 1)});
  m.run(5);
  REQUIRE(m.fault.has_value());
  CHECK(m.fault->kind == FaultKind::IllegalInstruction);
  CHECK(m.fault->pc == 0x1000);
  CHECK(m.steps_executed == 0);

  Machine c = boot(0x1000, {mk(Mnemonic::Csrrw, 5, 6, {}, 0x340)});
  c.run(5);
  REQUIRE(c.fault.has_value());
  CHECK(c.fault->kind == FaultKind::IllegalInstruction);

  // fence, by contrast, is a plain no-op here.
  Machine f = boot(0x1000, {mk(Mnemonic::Fence, 0, 0, {}, 0x33),
                            mk(Mnemonic::Addi, 10, 0, {}, 1)});
  f.run(2);
  CHECK_FALSE(f.halted());
  CHECK(f.regs[10] == 1);
}

TEST_CASE("bad fetches and accesses fault with the offending address") {
  Machine m = boot(0x1000, {mk(Mnemonic::Jalr, 0, 10, {}, 0)});
  m.regs[10] = 0x1002;  // jalr clears bit 0 only; bit 1 stays
  m.run(5);
  REQUIRE(m.fault.has_value());
  CHECK(m.fault->kind == FaultKind::MisalignedFetch);
  CHECK(m.fault->pc == 0x1002);

  Machine u = boot(0x1000, {mk(Mnemonic::Jalr, 0, 10, {}, 0)});
  u.regs[10] = 0x9000;
  u.run(5);
  REQUIRE(u.fault.has_value());
  CHECK(u.fault->kind == FaultKind::UnmappedAccess);
  CHECK(u.fault->pc == 0x9000);

  Machine l = boot(0x1000, {mk(Mnemonic::Lw, 6, 5, {}, 0)});
  l.regs[5] = 0x8000;
  l.run(5);
  REQUIRE(l.fault.has_value());
  CHECK(l.fault->kind == FaultKind::UnmappedAccess);
  CHECK(l.fault->pc == 0x1000);
  CHECK(l.fault->addr == 0x8000);

  // Stores into read-only mappings are faults, not silent drops.
  Machine s = boot(0x1000, {mk(Mnemonic::Sw, {}, 5, 6, 0)});
  s.regs[5] = 0x1000;
  s.run(5);
  REQUIRE(s.fault.has_value());
  CHECK(s.fault->kind == FaultKind::UnmappedAccess);
  CHECK(s.fault->addr == 0x1000);
  CHECK(s.steps_executed == 0);
}

TEST_CASE("run honors the step budget and the trace records writes") {
  Machine m = boot(0x1000, {
      mk(Mnemonic::Addi, 10, 10, {}, 1),
      mk(Mnemonic::Jal, 0, {}, {}, -4),  // tight loop
  });
  m.trace_enabled = true;
  uint64_t took = m.run(101);
  CHECK(took == 101);
  CHECK(m.steps_executed == 101);
  CHECK_FALSE(m.halted());
  CHECK(m.regs[10] == 51);

  REQUIRE(m.trace.size() == 101);
  CHECK(m.trace[0].pc == 0x1000);
  CHECK(m.trace[0].text == "addi a0, a0, 1");
  CHECK(m.trace[0].written_reg == 10);
  CHECK(m.trace[0].written_value == 1);
  CHECK(m.trace[1].pc == 0x1004);
  CHECK_FALSE(m.trace[1].written_reg.has_value());  // jal rd = x0
  CHECK(m.trace[2].written_value == 2);
}

TEST_CASE("execute drives the fixture chain to its goal") {
  const Exec& e = prepared();
  Verdict v = execute(fixture(), e.payload, e.vuln, e.goal);

  CHECK(v.outcome == Outcome::GoalMet);
  CHECK(v.steps == 64);
  CHECK(v.detail == "trap state satisfies the goal");
  REQUIRE(v.trap.has_value());
  CHECK(v.trap->pc == 0x100DC);
  CHECK(v.trap->regs[kRegA0] == 1);
  CHECK(v.trap->regs[kRegA1] == 0x20000);
  CHECK(v.trap->regs[kRegA2] == 256);
  CHECK(v.trap->regs[kRegA7] == 64);
  CHECK(v.trap->regs[kRegA3] == 0x10060);
  CHECK(v.trap->regs[kRegA4] == 0x30074);  // cursor walked all 12 entries

  REQUIRE(v.exfiltrated.size() == 256);
  CHECK(v.exfiltrated[0] == 0x4B);
  CHECK(v.exfiltrated[1] == 0x33);
  CHECK(v.exfiltrated[31] == 0x7D);
  CHECK(v.exfiltrated[32] == 0x41);  // session filler after the key
  CHECK(v.exfiltrated[255] == 0x41);

  REQUIRE(v.trace.size() == 64);
  CHECK(v.trace[0].pc == 0x10054);
  CHECK(v.trace[0].text == "lw a3, 0(a0)");

  ExecOptions quiet;
  quiet.trace = false;
  Verdict q = execute(fixture(), e.payload, e.vuln, e.goal, quiet);
  CHECK(q.outcome == Outcome::GoalMet);
  CHECK(q.trace.empty());
}

TEST_CASE("execute reports misses, faults and exhausted budgets") {
  const Exec& e = prepared();

  ChainGoal wrong = e.goal;
  wrong.required_regs[kRegA2] = 512;  // chain establishes 256
  Verdict v = execute(fixture(), e.payload, e.vuln, wrong);
  CHECK(v.outcome == Outcome::GoalMissed);
  CHECK(v.trap.has_value());

  ExecOptions tight;
  tight.max_steps = 10;
  v = execute(fixture(), e.payload, e.vuln, e.goal, tight);
  CHECK(v.outcome == Outcome::StepLimit);
  CHECK(v.steps == 10);
  CHECK_FALSE(v.trap.has_value());

  VulnSpec blind = e.vuln;
  blind.call_context.clear();  // a0 = 0 at the hijacked call
  v = execute(fixture(), e.payload, blind, e.goal);
  CHECK(v.outcome == Outcome::Fault);
  REQUIRE(v.fault.has_value());
  CHECK(v.fault->kind == FaultKind::UnmappedAccess);
}

TEST_CASE("trace_gadgets carves the run into labeled dispatch cycles") {
  const Exec& e = prepared();
  Verdict v = execute(fixture(), e.payload, e.vuln, e.goal);

  ScanOptions opt;
  ScanResult r = scan_image(fixture(), opt);
  auto segs = trace_gadgets(v, r.candidates, e.dispatcher);

  REQUIRE(segs.size() == 13);
  CHECK(segs[0].start_pc == 0x10054);
  CHECK(segs[0].first_step == 0);
  CHECK(segs[0].step_count == 3);
  CHECK(segs[0].label == "initializer@0x10054");

  CHECK(segs[1].start_pc == 0x10060);
  CHECK(segs[1].step_count == 5);  // three walker steps plus the handler
  CHECK(segs[1].label == "arithmetic-logic@0x1006c");
  CHECK(segs[2].step_count == 6);  // the three-instruction key loader
  CHECK(segs[2].label == "memory-access@0x10074");
  CHECK(segs[3].label == "arithmetic-logic@0x10080");
  for (int i = 4; i < 12; ++i) {
    CHECK(segs[i].label == "arithmetic-logic@0x10088");
    CHECK(segs[i].step_count == 5);
  }
  // The syscall wrapper never appears in the jalr-terminated catalog; the
  // pipeline layer names it separately.
  CHECK(segs[12].label == "unknown code");
  CHECK(segs[12].step_count == 5);

  // Segments tile the whole trace.
  size_t total = 0;
  for (const auto& s : segs) {
    CHECK(s.first_step == total);
    total += s.step_count;
  }
  CHECK(total == v.trace.size());
}
