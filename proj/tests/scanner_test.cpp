#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "jopkit/gadgets.hpp"

using namespace jopkit;

namespace {

std::string data_path(const std::string& name) {
  return std::string(JOPKIT_TEST_DATA_DIR) + "/" + name;
}

const ElfImage& fixture() {
  static ElfImage image = ElfImage::load_file(data_path("fixture.elf"));
  return image;
}

const ElfImage& fixture2() {
  static ElfImage image =
      ElfImage::load_file(data_path("fixture_twostage.elf"));
  return image;
}

Instruction mk(Mnemonic m, std::optional<uint8_t> rd,
               std::optional<uint8_t> rs1, std::optional<uint8_t> rs2,
               std::optional<int32_t> imm, uint64_t addr = 0) {
  Instruction ins;
  ins.mnemonic = m;
  ins.format = mnemonic_format(m);
  ins.rd = rd;
  ins.rs1 = rs1;
  ins.rs2 = rs2;
  ins.imm = imm;
  ins.address = addr;
  ins.raw = encode(ins);
  return ins;
}

// (address, length) pairs for a candidate list, order-insensitive.
std::set<std::pair<uint64_t, size_t>> keys(
    const std::vector<GadgetCandidate>& cs) {
  std::set<std::pair<uint64_t, size_t>> out;
  for (const auto& c : cs) out.insert({c.start_addr, c.length()});
  return out;
}

const GadgetCandidate* at(const std::vector<GadgetCandidate>& cs,
                          uint64_t addr, size_t len) {
  for (const auto& c : cs)
    if (c.start_addr == addr && c.length() == len) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("summarize captures register and memory effects") {
  auto w = std::vector<Instruction>{
      mk(Mnemonic::Addi, 12, 12, {}, 32),
      mk(Mnemonic::Jalr, 0, 13, {}, 0),
  };
  GadgetSummary s = summarize(w);
  CHECK(s.regs_read == (reg_bit(12) | reg_bit(13)));
  CHECK(s.regs_written == reg_bit(12));
  CHECK(s.mem_reads.empty());
  CHECK(s.mem_writes.empty());
  CHECK_FALSE(s.has_opaque_effect);
  CHECK(s.terminator.rd == 0);
  CHECK(s.terminator.rs1 == 13);
  CHECK(s.terminator.imm == 0);

  auto mem = std::vector<Instruction>{
      mk(Mnemonic::Lw, 11, 10, {}, 8),
      mk(Mnemonic::Sb, {}, 11, 12, 4),
      mk(Mnemonic::Jalr, 1, 5, {}, 12),
  };
  s = summarize(mem);
  REQUIRE(s.mem_reads.size() == 1);
  CHECK(s.mem_reads[0] == MemEffect{10, 8, 4, 11});
  REQUIRE(s.mem_writes.size() == 1);
  CHECK(s.mem_writes[0] == MemEffect{11, 4, 1, 12});
  CHECK(s.regs_written == (reg_bit(11) | reg_bit(1)));  // includes jalr rd
  CHECK(s.regs_read == (reg_bit(10) | reg_bit(11) | reg_bit(12) | reg_bit(5)));
  CHECK(s.terminator.rd == 1);
  CHECK(s.terminator.imm == 12);

  auto opaque = std::vector<Instruction>{
      mk(Mnemonic::Fence, 0, 0, {}, 0x33),
      mk(Mnemonic::Jalr, 0, 13, {}, 0),
  };
  CHECK(summarize(opaque).has_opaque_effect);

  // x0 stays out of both masks, and csr*i carries a uimm, not a read.
  auto zeros = std::vector<Instruction>{
      mk(Mnemonic::Addi, 0, 0, {}, 5),
      mk(Mnemonic::Csrrwi, 0, 9, {}, 0x340),
      mk(Mnemonic::Jalr, 0, 13, {}, 0),
  };
  s = summarize(zeros);
  CHECK(s.regs_read == reg_bit(13));
  CHECK(s.regs_written == 0);
  CHECK(s.has_opaque_effect);
}

TEST_CASE("eval_window propagates constants through ALU ops") {
  auto w = std::vector<Instruction>{
      mk(Mnemonic::Lui, 5, {}, {}, 0x20),
      mk(Mnemonic::Addi, 6, 5, {}, 0x100),
      mk(Mnemonic::Slli, 7, 6, {}, 4),
      mk(Mnemonic::Xori, 28, 7, {}, -1),
  };
  ConstState st = eval_window(w, nullptr, Xlen::Rv32);
  CHECK(st.regs[5] == 0x20000);
  CHECK(st.regs[6] == 0x20100);
  CHECK(st.regs[7] == 0x201000);
  CHECK(st.regs[28] == (~0x201000ull & 0xFFFFFFFF));
  CHECK(st.regs[0] == 0);
  CHECK_FALSE(st.regs[10].has_value());

  // Arithmetic respects the 32-bit wrap and sign-extension rules.
  auto sign = std::vector<Instruction>{
      mk(Mnemonic::Lui, 5, {}, {}, 0x80000),
      mk(Mnemonic::Srai, 6, 5, {}, 4),
      mk(Mnemonic::Srli, 7, 5, {}, 4),
  };
  st = eval_window(sign, nullptr, Xlen::Rv32);
  CHECK(st.regs[5] == 0x80000000);
  CHECK(st.regs[6] == 0xF8000000);
  CHECK(st.regs[7] == 0x08000000);

  // Unknown input poisons the output, x0 writes are dropped.
  auto poison = std::vector<Instruction>{
      mk(Mnemonic::Add, 6, 5, 10, {}),
      mk(Mnemonic::Addi, 0, 0, {}, 7),
  };
  ConstState init;
  init.regs[5] = 1;
  st = eval_window(poison, nullptr, Xlen::Rv32, init);
  CHECK_FALSE(st.regs[6].has_value());
  CHECK(st.regs[0] == 0);
}

TEST_CASE("eval_window resolves loads through the image until a store") {
  // key_ref at 0x20100 holds the key address.
  auto w = std::vector<Instruction>{
      mk(Mnemonic::Lui, 5, {}, {}, 0x20),
      mk(Mnemonic::Lw, 6, 5, {}, 0x100),
      mk(Mnemonic::Lbu, 7, 6, {}, 4),
      mk(Mnemonic::Lb, 28, 6, {}, 4),
  };
  ConstState st = eval_window(w, &fixture(), Xlen::Rv32);
  CHECK(st.regs[6] == 0x20000);
  CHECK(st.regs[7] == 0xDE);
  CHECK(st.regs[28] == 0xFFFFFFDE);
  CHECK_FALSE(st.store_seen);

  // A store of unknown provenance makes later loads untrusted.
  auto dirty = std::vector<Instruction>{
      mk(Mnemonic::Lui, 5, {}, {}, 0x20),
      mk(Mnemonic::Sw, {}, 5, 6, 0),
      mk(Mnemonic::Lw, 7, 5, {}, 0x100),
  };
  st = eval_window(dirty, &fixture(), Xlen::Rv32);
  CHECK(st.store_seen);
  CHECK_FALSE(st.regs[7].has_value());

  // Unmapped or unknown addresses never produce values.
  auto unmapped = std::vector<Instruction>{
      mk(Mnemonic::Lui, 5, {}, {}, 0x50),
      mk(Mnemonic::Lw, 6, 5, {}, 0),
      mk(Mnemonic::Lw, 7, 10, {}, 0),
  };
  st = eval_window(unmapped, &fixture(), Xlen::Rv32);
  CHECK_FALSE(st.regs[6].has_value());
  CHECK_FALSE(st.regs[7].has_value());

  // Without an image, loads stay opaque.
  auto blind = std::vector<Instruction>{
      mk(Mnemonic::Lui, 5, {}, {}, 0x20),
      mk(Mnemonic::Lw, 6, 5, {}, 0x100),
  };
  st = eval_window(blind, nullptr, Xlen::Rv32);
  CHECK_FALSE(st.regs[6].has_value());
}

TEST_CASE("find_terminators locates every indirect jump in the fixture") {
  auto terms = find_terminators(fixture());
  CHECK(terms.size() == 17);
  CHECK(std::is_sorted(terms.begin(), terms.end(),
                       [](const auto& x, const auto& y) {
                         return x.first < y.first;
                       }));
  std::set<uint64_t> addrs;
  for (const auto& [addr, ins] : terms) {
    CHECK(ins.mnemonic == Mnemonic::Jalr);
    CHECK(ins.address == addr);
    addrs.insert(addr);
  }
  CHECK(addrs.count(0x1005C));  // initializer tail
  CHECK(addrs.count(0x10068));  // dispatcher tail
  CHECK(addrs.count(0x10094));  // handler tail
  CHECK(addrs.count(0x100E0));  // ret after ecall
  CHECK_FALSE(addrs.count(0x100DC));  // the ecall itself is not a jalr
}

TEST_CASE("extract_candidates walks back until a barrier") {
  // Three windows end at the key-loader tail; the previous gadget's jalr
  // stops the walk.
  auto cs = extract_candidates(fixture(), 0x1007C, 16);
  CHECK(keys(cs) == std::set<std::pair<uint64_t, size_t>>{
                        {0x1007C, 1}, {0x10078, 2}, {0x10074, 3}});
  for (const auto& c : cs) {
    CHECK(c.instructions.back().address == 0x1007C);
    CHECK(c.instructions.back().mnemonic == Mnemonic::Jalr);
    CHECK(c.instructions.size() == c.length());
  }

  // max_window caps the walk.
  cs = extract_candidates(fixture(), 0x1007C, 2);
  CHECK(keys(cs) == std::set<std::pair<uint64_t, size_t>>{{0x1007C, 1},
                                                          {0x10078, 2}});

  // A conditional branch is a barrier: the copy loop tail stands alone.
  cs = extract_candidates(fixture(), 0x10050, 16);
  CHECK(keys(cs) == std::set<std::pair<uint64_t, size_t>>{{0x10050, 1}});

  // ecall is a barrier too.
  cs = extract_candidates(fixture(), 0x100E0, 16);
  CHECK(keys(cs) == std::set<std::pair<uint64_t, size_t>>{{0x100E0, 1}});
}

TEST_CASE("classify sorts fixture windows into families") {
  ScanOptions opt;
  ScanResult r = scan_image(fixture(), opt);
  CHECK(r.candidates.size() == 41);

  std::map<Family, int> tally;
  for (const auto& c : r.candidates) ++tally[c.family];
  CHECK(tally[Family::ArithmeticLogic] == 5);
  CHECK(tally[Family::MemoryAccess] == 5);
  CHECK(tally[Family::Dispatcher] == 6);
  CHECK(tally[Family::Initializer] == 1);
  CHECK(tally[Family::Unclassified] == 24);
  CHECK(tally[Family::SystemCall] == 0);  // ecall never terminates a window

  CHECK(at(r.candidates, 0x10088, 2)->family == Family::ArithmeticLogic);
  CHECK(at(r.candidates, 0x10074, 3)->family == Family::MemoryAccess);
  CHECK(at(r.candidates, 0x100AC, 2)->family == Family::MemoryAccess);
  CHECK(at(r.candidates, 0x10060, 3)->family == Family::Dispatcher);
  CHECK(at(r.candidates, 0x10054, 3)->family == Family::Initializer);
  CHECK(at(r.candidates, 0x100BC, 3)->family == Family::Unclassified);
  // The victim's saved-ra reload looks like table-walking code.
  CHECK(at(r.candidates, 0x10028, 3)->family == Family::Dispatcher);
}

TEST_CASE("find_dispatchers reports both table walkers in the fixture") {
  ScanOptions opt;
  auto ds = find_dispatchers(fixture(), opt);
  REQUIRE(ds.size() == 2);

  // Function epilogue: structurally a dispatcher over the stack.
  const DispatcherGadget& ep = ds[0];
  CHECK(ep.kind == DispatcherGadget::Kind::SingleStage);
  CHECK(ep.stage1_addr == 0x10028);
  CHECK_FALSE(ep.stage2_addr.has_value());
  CHECK(ep.table_cursor_reg == kRegSp);
  CHECK(ep.jump_reg == kRegRa);
  CHECK(ep.stride == 16);
  CHECK(ep.load_offset == 12);
  CHECK(ep.reentry_addr == 0x10028);
  CHECK_FALSE(ep.pre_increment);
  CHECK(ep.stage1_len == 3);
  CHECK(ep.stage2_len == 0);

  // The planted walker.
  const DispatcherGadget& d = ds[1];
  CHECK(d.kind == DispatcherGadget::Kind::SingleStage);
  CHECK(d.stage1_addr == 0x10060);
  CHECK(d.table_cursor_reg == kRegA4);
  CHECK(d.jump_reg == kRegA5);
  CHECK(d.stride == 4);
  CHECK(d.load_offset == 0);
  CHECK(d.reentry_addr == 0x10060);
  CHECK_FALSE(d.pre_increment);
  CHECK(d.side_writes == 0);
  CHECK(d.stage1_len == 3);
}

TEST_CASE("find_dispatchers links the split walker across its jump") {
  ScanOptions opt;
  auto ds = find_dispatchers(fixture2(), opt);
  REQUIRE(ds.size() == 2);

  const DispatcherGadget& d = ds[1];
  CHECK(d.kind == DispatcherGadget::Kind::TwoStage);
  CHECK(d.stage1_addr == 0x10040);
  CHECK(d.stage2_addr == 0x10048);
  CHECK(d.table_cursor_reg == kRegA4);
  CHECK(d.jump_reg == kRegA5);
  CHECK(d.stride == 4);
  CHECK(d.load_offset == 0);
  CHECK(d.reentry_addr == 0x10040);  // bump first, then load and jump
  CHECK(d.pre_increment);
  CHECK(d.stage1_len == 2);
  CHECK(d.stage2_len == 2);

  opt.two_stage_reentry = ScanOptions::Reentry::Stage2;
  ds = find_dispatchers(fixture2(), opt);
  REQUIRE(ds.size() == 2);
  CHECK(ds[1].reentry_addr == 0x10048);
  CHECK_FALSE(ds[1].pre_increment);
}

TEST_CASE("filter_safe keeps only chain-composable windows") {
  ScanOptions opt;
  ScanResult r = scan_image(fixture(), opt);
  const DispatcherGadget& d = r.dispatchers[1];

  auto safe = filter_safe(r.candidates, opt, d);
  auto got = keys(safe);
  CHECK(got.size() == 20);

  CHECK(got.count({0x1006C, 2}));  // addi a0, zero, 1
  CHECK(got.count({0x10080, 2}));  // addi a2, zero, 0
  CHECK(got.count({0x10088, 2}));  // addi a2, a2, 32
  CHECK(got.count({0x10074, 3}));  // key address loader
  CHECK(got.count({0x100AC, 2}));  // sw a0, 0(a1)
  CHECK(got.count({0x10054, 3}));  // initializer window

  CHECK_FALSE(got.count({0x10090, 2}));  // writes a3
  CHECK_FALSE(got.count({0x10058, 2}));  // writes the cursor a4
  CHECK_FALSE(got.count({0x10098, 2}));  // jalr offset 8 under strict rules
  CHECK_FALSE(got.count({0x100A0, 3}));  // fence inside
  CHECK_FALSE(got.count({0x100C8, 2}));  // terminator not through a3
  CHECK_FALSE(got.count({0x10028, 3}));  // the epilogue walker itself

  opt.relax_imm = true;
  safe = filter_safe(r.candidates, opt, d);
  got = keys(safe);
  CHECK(got.size() == 22);
  CHECK(got.count({0x10098, 2}));
  CHECK(got.count({0x1009C, 1}));
  const GadgetCandidate* skip = at(safe, 0x10098, 2);
  REQUIRE(skip != nullptr);
  CHECK(skip->relaxed_imm == 8);
  CHECK(at(safe, 0x1006C, 2)->relaxed_imm == std::nullopt);
}

TEST_CASE("find_initializers spots the context-entry gadget only") {
  ScanOptions opt;
  auto inits = find_initializers(fixture(), opt);
  REQUIRE(inits.size() == 1);
  const GadgetCandidate& init = inits[0];
  CHECK(init.start_addr == 0x10054);
  CHECK(init.length() == 3);
  CHECK(init.family == Family::Initializer);
  CHECK(init.summary.terminator.rs1 == kRegA3);
  CHECK(init.summary.terminator.imm == 0);
  CHECK(mask_has(init.summary.regs_written, kRegA3));
  CHECK(mask_has(init.summary.regs_written, kRegA4));

  auto inits2 = find_initializers(fixture2(), opt);
  REQUIRE(inits2.size() == 1);
  CHECK(inits2[0].start_addr == 0x10034);
}

TEST_CASE("parallel scan matches the serial reference") {
  ScanOptions opt;
  for (const ElfImage* image : {&fixture(), &fixture2()}) {
    ScanResult a = scan_image(*image, opt);
    ScanResult b = scan_image_parallel(*image, opt);

    REQUIRE(a.candidates.size() == b.candidates.size());
    for (size_t i = 0; i < a.candidates.size(); ++i) {
      const GadgetCandidate& x = a.candidates[i];
      const GadgetCandidate& y = b.candidates[i];
      CHECK(x.start_addr == y.start_addr);
      CHECK(x.length() == y.length());
      CHECK(x.family == y.family);
      CHECK(x.safe == y.safe);
      CHECK(x.relaxed_imm == y.relaxed_imm);
      CHECK(x.summary.regs_read == y.summary.regs_read);
      CHECK(x.summary.regs_written == y.summary.regs_written);
      CHECK(x.summary.mem_reads == y.summary.mem_reads);
      CHECK(x.summary.mem_writes == y.summary.mem_writes);
    }

    REQUIRE(a.dispatchers.size() == b.dispatchers.size());
    for (size_t i = 0; i < a.dispatchers.size(); ++i) {
      CHECK(a.dispatchers[i].stage1_addr == b.dispatchers[i].stage1_addr);
      CHECK(a.dispatchers[i].kind == b.dispatchers[i].kind);
      CHECK(a.dispatchers[i].stride == b.dispatchers[i].stride);
    }
    CHECK(keys(a.initializers) == keys(b.initializers));
  }
}
