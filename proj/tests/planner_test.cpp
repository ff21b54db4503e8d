#include <functional>

#include "doctest.h"
#include "jopkit/planner.hpp"

using namespace jopkit;

namespace {

std::string data_path(const std::string& name) {
  return std::string(JOPKIT_TEST_DATA_DIR) + "/" + name;
}

const ElfImage& fixture() {
  static ElfImage image = ElfImage::load_file(data_path("fixture.elf"));
  return image;
}

struct Scanned {
  ScanResult result;
  std::vector<GadgetCandidate> safe;
};

const Scanned& scanned() {
  static Scanned s = [] {
    Scanned out;
    ScanOptions opt;
    out.result = scan_image(fixture(), opt);
    out.safe = filter_safe(out.result.candidates, opt, out.result.dispatchers[1]);
    return out;
  }();
  return s;
}

ChainGoal exfil_goal() {
  ChainGoal g;
  g.required_regs = {{kRegA0, 1}, {kRegA1, 0x20000}, {kRegA2, 256}};
  g.secret_region = SecretRegion{0x20000, 256};
  return g;
}

ChainPlan plan_fixture(const ChainGoal& goal) {
  ScanOptions opt;
  return plan_chain(goal, scanned().safe, scanned().result.dispatchers[1],
                    scanned().result.initializers[0], fixture(), opt);
}

PlanError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const PlanError& e) {
    return e.kind();
  }
  FAIL("expected PlanError");
  return PlanError::Kind::InvalidGoal;
}

}  // namespace

TEST_CASE("synthesize_literal picks the cheapest setter/incrementer pair") {
  std::vector<LiteralSetter> set0 = {{0x100, 0}};
  std::vector<LiteralIncrementer> incs = {{0x200, 1}, {0x210, 3}, {0x220, 32}};

  auto steps = synthesize_literal(96, kRegA2, set0, incs);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].purpose == Purpose::InitLiteral);
  CHECK(steps[0].gadget_addr == 0x100);
  CHECK(steps[0].repeat == 1);
  CHECK(steps[1].purpose == Purpose::Increment);
  CHECK(steps[1].gadget_addr == 0x220);  // 3 x 32 beats 32 x 3
  CHECK(steps[1].repeat == 3);
  CHECK(steps[1].target_reg == kRegA2);

  // An exact setter wins outright.
  auto exact = synthesize_literal(
      7, kRegA0, {{0x100, 0}, {0x108, 7}}, incs);
  REQUIRE(exact.size() == 1);
  CHECK(exact[0].gadget_addr == 0x108);
  CHECK(exact[0].repeat == 1);

  // Only divisible deltas apply: 7 is 7 ones, never 3s.
  auto ones = synthesize_literal(7, kRegA0, set0, {{0x200, 1}, {0x210, 3}});
  REQUIRE(ones.size() == 2);
  CHECK(ones[1].gadget_addr == 0x200);
  CHECK(ones[1].repeat == 7);

  // Setters above the target are useless (no subtraction gadgets).
  CHECK_THROWS_AS(synthesize_literal(5, kRegA0, {{0x100, 9}}, incs),
                  PlanError);

  CHECK(kind_of([&] { synthesize_literal(5, kRegA0, set0, {{0x210, 3}}); }) ==
        PlanError::Kind::Unsynthesizable);
  CHECK(kind_of([&] { synthesize_literal(5, kRegA0, {}, incs); }) ==
        PlanError::Kind::Unsynthesizable);

  // Repeat counts are capped.
  CHECK_NOTHROW(synthesize_literal(65536, kRegA0, set0, {{0x200, 1}}));
  CHECK(kind_of([&] {
          synthesize_literal(65537, kRegA0, set0, {{0x200, 1}});
        }) == PlanError::Kind::Unsynthesizable);
}

TEST_CASE("resolve_syscall_entry finds the id-setting instruction") {
  SyscallConvention conv;
  ChainGoal goal;  // write

  ChainStep s = resolve_syscall_entry(goal, fixture(), conv);
  CHECK(s.gadget_addr == 0x100D8);  // skips the wrapper's argument shuffle
  CHECK(s.purpose == Purpose::Syscall);
  CHECK(s.target_reg == kRegA7);

  SyscallResolution res;
  res.explicit_addr = 0x12345;
  CHECK(resolve_syscall_entry(goal, fixture(), conv, res).gadget_addr ==
        0x12345);

  res = {};
  res.symbol = "write";
  res.offset = 8;
  CHECK(resolve_syscall_entry(goal, fixture(), conv, res).gadget_addr ==
        0x100D8);

  res = {};
  res.symbol = "sys_exit";
  res.offset = 0;
  CHECK(resolve_syscall_entry(goal, fixture(), conv, res).gadget_addr ==
        0x100E4);

  ChainGoal unknown;
  unknown.syscall_name = "mmap";
  CHECK(kind_of([&] { resolve_syscall_entry(unknown, fixture(), conv); }) ==
        PlanError::Kind::SyscallNotFound);

  ChainGoal nosym;
  nosym.syscall_name = "frobnicate";
  nosym.syscall_number = 64;
  CHECK(kind_of([&] { resolve_syscall_entry(nosym, fixture(), conv); }) ==
        PlanError::Kind::SyscallNotFound);
}

TEST_CASE("resolve_syscall_entry reaches imports through the PLT") {
  ElfImage plt = ElfImage::load_file(data_path("fixture_plt.elf"));
  SyscallConvention conv;
  ChainGoal goal;

  // The stub itself holds no ecall, so an offset must be supplied.
  SyscallResolution res;
  res.symbol = "write";
  res.offset = 0;
  ChainStep s = resolve_syscall_entry(goal, plt, conv, res);
  CHECK(s.gadget_addr == 0x220A0);

  res.offset.reset();
  CHECK(kind_of([&] { resolve_syscall_entry(goal, plt, conv, res); }) ==
        PlanError::Kind::SyscallNotFound);
}

TEST_CASE("plan_chain lays out the fixture exfiltration chain") {
  ChainPlan plan = plan_fixture(exfil_goal());

  CHECK(plan.initializer.gadget_addr == 0x10054);
  CHECK(plan.initializer.purpose == Purpose::Initializer);
  CHECK(plan.dispatcher.stage1_addr == 0x10060);
  CHECK(plan.xlen == Xlen::Rv32);

  // ctx_enter: lw a3, 0(a0); lw a4, 4(a0)
  CHECK(plan.dispatcher_slot.base_reg == kRegA0);
  CHECK(plan.dispatcher_slot.offset == 0);
  CHECK(plan.dispatcher_slot.dest_reg == kRegA3);
  CHECK(plan.cursor_slot.base_reg == kRegA0);
  CHECK(plan.cursor_slot.offset == 4);
  CHECK(plan.cursor_slot.dest_reg == kRegA4);

  REQUIRE(plan.steps.size() == 5);
  CHECK(plan.steps[0].gadget_addr == 0x1006C);
  CHECK(plan.steps[0].purpose == Purpose::SetFd);
  CHECK(plan.steps[0].target_reg == kRegA0);
  CHECK(plan.steps[1].gadget_addr == 0x10074);
  CHECK(plan.steps[1].purpose == Purpose::LoadAddress);
  CHECK(plan.steps[1].target_reg == kRegA1);
  CHECK(plan.steps[2].gadget_addr == 0x10080);
  CHECK(plan.steps[2].purpose == Purpose::InitLiteral);
  CHECK(plan.steps[2].target_reg == kRegA2);
  CHECK(plan.steps[3].gadget_addr == 0x10088);
  CHECK(plan.steps[3].purpose == Purpose::Increment);
  CHECK(plan.steps[3].repeat == 8);
  CHECK(plan.steps[4].gadget_addr == 0x100D8);
  CHECK(plan.steps[4].purpose == Purpose::Syscall);
  CHECK(plan.syscall_entry_addr() == 0x100D8);
  CHECK(plan.table_entry_count() == 12);

  // Predicted trap-time register file.
  const auto& fin = plan.predicted_final_state;
  CHECK(fin.at(kRegA0) == 1);
  CHECK(fin.at(kRegA1) == 0x20000);
  CHECK(fin.at(kRegA2) == 256);
  CHECK(fin.at(kRegA7) == 64);
  CHECK(fin.at(kRegA3) == 0x10060);   // still parked on the dispatcher
  CHECK(fin.at(kRegA5) == 0x100D8);   // last fetched table entry
  CHECK(fin.at(5) == 0x20000);        // t0 left over from the address loader
  CHECK(fin.count(kRegA4) == 0);      // cursor depends on the table base
}

TEST_CASE("plan_chain rejects goals that fight the chain machinery") {
  const auto& sc = scanned();
  ScanOptions opt;

  ChainGoal reserved = exfil_goal();
  reserved.required_regs[kRegA3] = 5;
  CHECK(kind_of([&] { plan_fixture(reserved); }) ==
        PlanError::Kind::InvalidGoal);

  ChainGoal jumpreg = exfil_goal();
  jumpreg.required_regs[kRegA5] = 5;
  CHECK(kind_of([&] { plan_fixture(jumpreg); }) ==
        PlanError::Kind::InvalidGoal);

  ChainGoal zero = exfil_goal();
  zero.required_regs[0] = 5;
  CHECK(kind_of([&] { plan_fixture(zero); }) == PlanError::Kind::InvalidGoal);

  ChainGoal conflict = exfil_goal();
  conflict.required_regs[kRegA7] = 63;  // read, but the goal says write
  CHECK(kind_of([&] { plan_fixture(conflict); }) ==
        PlanError::Kind::InvalidGoal);

  // No producer at all for a6 among the safe gadgets.
  ChainGoal a6 = exfil_goal();
  a6.required_regs[16] = 0x1234;
  try {
    plan_fixture(a6);
    FAIL("expected PlanError");
  } catch (const PlanError& e) {
    CHECK(e.kind() == PlanError::Kind::UnsatisfiableRegister);
    CHECK(e.reg() == 16);
  }

  // a0 has a setter for 1 but no incrementer, so 7 is out of reach.
  ChainGoal a0 = exfil_goal();
  a0.required_regs[kRegA0] = 7;
  CHECK(kind_of([&] { plan_fixture(a0); }) ==
        PlanError::Kind::UnsatisfiableRegister);

  // The epilogue walker runs over sp, which the initializer cannot seed.
  CHECK(kind_of([&] {
          plan_chain(exfil_goal(), sc.safe, sc.result.dispatchers[0],
                     sc.result.initializers[0], fixture(), opt);
        }) == PlanError::Kind::NoDispatcher);

  // A plain gadget cannot stand in for the initializer.
  const GadgetCandidate* h_one = nullptr;
  for (const auto& c : sc.safe)
    if (c.start_addr == 0x1006C && c.length() == 2) h_one = &c;
  REQUIRE(h_one != nullptr);
  CHECK(kind_of([&] {
          plan_chain(exfil_goal(), sc.safe, sc.result.dispatchers[1], *h_one,
                     fixture(), opt);
        }) == PlanError::Kind::NoInitializer);

  // Syscall resolution failures surface through plan_chain too.
  ChainGoal exit_goal = exfil_goal();
  exit_goal.syscall_name = "exit";  // no symbol of that name in the fixture
  CHECK(kind_of([&] { plan_fixture(exit_goal); }) ==
        PlanError::Kind::SyscallNotFound);
}

TEST_CASE("plan_chain orders increments after their literal base") {
  // 64 = 0 + 2 x 32: a cleared register with repeats on top.
  ChainGoal g;
  g.required_regs = {{kRegA2, 64}};
  ChainPlan plan = plan_fixture(g);

  REQUIRE(plan.steps.size() == 3);
  CHECK(plan.steps[0].purpose == Purpose::InitLiteral);
  CHECK(plan.steps[0].gadget_addr == 0x10080);
  CHECK(plan.steps[1].purpose == Purpose::Increment);
  CHECK(plan.steps[1].gadget_addr == 0x10088);
  CHECK(plan.steps[1].repeat == 2);
  CHECK(plan.steps[2].purpose == Purpose::Syscall);
  CHECK(plan.predicted_final_state.at(kRegA2) == 64);
  CHECK(plan.table_entry_count() == 4);
}
