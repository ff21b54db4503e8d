#include "jopkit/report.hpp"

#include <fstream>
#include <stdexcept>

namespace jopkit {

namespace {

Json reg_map_to_json(const std::map<uint8_t, uint64_t>& m) {
  Json j = Json::object();
  for (const auto& [reg, value] : m) j[reg_name(reg)] = value;
  return j;
}

std::map<uint8_t, uint64_t> reg_map_from_json(const Json& j) {
  std::map<uint8_t, uint64_t> m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto reg = reg_from_name(it.key());
    if (!reg) throw std::runtime_error("unknown register name " + it.key());
    m[*reg] = it.value().get<uint64_t>();
  }
  return m;
}

Json mem_effects_to_json(const std::vector<MemEffect>& v) {
  Json arr = Json::array();
  for (const MemEffect& e : v) {
    Json j;
    j["base"] = reg_name(e.base);
    j["offset"] = e.offset;
    j["width"] = e.width;
    j["reg"] = reg_name(e.reg);
    arr.push_back(std::move(j));
  }
  return arr;
}

Json step_to_json(const ChainStep& s) {
  Json j;
  j["address"] = s.gadget_addr;
  j["purpose"] = purpose_name(s.purpose);
  j["repeat"] = s.repeat;
  j["target-reg"] = reg_name(s.target_reg);
  j["rationale"] = s.rationale;
  return j;
}

ChainStep step_from_json(const Json& j) {
  ChainStep s;
  s.gadget_addr = j.at("address").get<uint64_t>();
  auto p = purpose_from_name(j.at("purpose").get<std::string>());
  if (!p) throw std::runtime_error("unknown step purpose");
  s.purpose = *p;
  s.repeat = j.at("repeat").get<uint32_t>();
  s.target_reg = reg_from_name(j.at("target-reg").get<std::string>()).value_or(0);
  s.rationale = j.value("rationale", std::string{});
  return s;
}

Json slot_to_json(const SeedSlot& s) {
  Json j;
  j["base-reg"] = reg_name(s.base_reg);
  j["offset"] = s.offset;
  j["dest-reg"] = reg_name(s.dest_reg);
  return j;
}

SeedSlot slot_from_json(const Json& j) {
  SeedSlot s;
  s.base_reg = reg_from_name(j.at("base-reg").get<std::string>()).value_or(0);
  s.offset = j.at("offset").get<int32_t>();
  s.dest_reg = reg_from_name(j.at("dest-reg").get<std::string>()).value_or(0);
  return s;
}

}  // namespace

std::string canonical_dump(const Json& doc) { return doc.dump(2) + "\n"; }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_binary_file(const std::string& path,
                       const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return Json::parse(in);
}

void write_json_file(const std::string& path, const Json& doc) {
  write_text_file(path, canonical_dump(doc));
}

std::string bytes_to_hex(const std::vector<uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

std::vector<uint8_t> hex_to_bytes(const std::string& hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::runtime_error("bad hex digit");
  };
  if (hex.size() % 2) throw std::runtime_error("odd hex length");
  std::vector<uint8_t> out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<uint8_t>(nibble(hex[i]) << 4 | nibble(hex[i + 1])));
  return out;
}

Json candidate_to_json(const GadgetCandidate& c) {
  Json j;
  j["address"] = c.start_addr;
  Json words = Json::array();
  Json disasm = Json::array();
  for (const Instruction& ins : c.instructions) {
    words.push_back(ins.raw);
    disasm.push_back(to_string(ins));
  }
  j["words"] = std::move(words);
  j["asm"] = std::move(disasm);
  j["family"] = family_name(c.family);
  j["safe"] = c.safe;
  if (c.relaxed_imm)
    j["relaxed-imm"] = *c.relaxed_imm;
  else
    j["relaxed-imm"] = nullptr;
  Json sum;
  sum["regs-read"] = mask_to_string(c.summary.regs_read);
  sum["regs-written"] = mask_to_string(c.summary.regs_written);
  sum["mem-reads"] = mem_effects_to_json(c.summary.mem_reads);
  sum["mem-writes"] = mem_effects_to_json(c.summary.mem_writes);
  sum["opaque"] = c.summary.has_opaque_effect;
  Json term;
  term["rd"] = reg_name(c.summary.terminator.rd);
  term["rs1"] = reg_name(c.summary.terminator.rs1);
  term["imm"] = c.summary.terminator.imm;
  sum["terminator"] = std::move(term);
  j["summary"] = std::move(sum);
  return j;
}

GadgetCandidate candidate_from_json(const Json& j) {
  GadgetCandidate c;
  c.start_addr = j.at("address").get<uint64_t>();
  uint64_t addr = c.start_addr;
  for (const auto& w : j.at("words")) {
    auto ins = decode(w.get<uint32_t>(), addr);
    if (!ins) throw std::runtime_error("catalog gadget word fails to decode");
    c.instructions.push_back(*ins);
    addr += 4;
  }
  c.summary = summarize(c.instructions);
  auto fam = family_from_name(j.at("family").get<std::string>());
  if (!fam) throw std::runtime_error("unknown gadget family");
  c.family = *fam;
  c.safe = j.at("safe").get<bool>();
  if (!j.at("relaxed-imm").is_null())
    c.relaxed_imm = j.at("relaxed-imm").get<int32_t>();
  return c;
}

Json dispatcher_to_json(const DispatcherGadget& d) {
  Json j;
  j["kind"] =
      d.kind == DispatcherGadget::Kind::SingleStage ? "single-stage"
                                                    : "two-stage";
  j["stage1-addr"] = d.stage1_addr;
  if (d.stage2_addr)
    j["stage2-addr"] = *d.stage2_addr;
  else
    j["stage2-addr"] = nullptr;
  j["cursor-reg"] = reg_name(d.table_cursor_reg);
  j["jump-reg"] = reg_name(d.jump_reg);
  j["stride"] = d.stride;
  j["reentry-addr"] = d.reentry_addr;
  j["load-offset"] = d.load_offset;
  j["pre-increment"] = d.pre_increment;
  j["side-writes"] = mask_to_string(d.side_writes);
  j["stage1-len"] = d.stage1_len;
  j["stage2-len"] = d.stage2_len;
  return j;
}

DispatcherGadget dispatcher_from_json(const Json& j) {
  DispatcherGadget d;
  d.kind = j.at("kind").get<std::string>() == "two-stage"
               ? DispatcherGadget::Kind::TwoStage
               : DispatcherGadget::Kind::SingleStage;
  d.stage1_addr = j.at("stage1-addr").get<uint64_t>();
  if (!j.at("stage2-addr").is_null())
    d.stage2_addr = j.at("stage2-addr").get<uint64_t>();
  d.table_cursor_reg =
      reg_from_name(j.at("cursor-reg").get<std::string>()).value_or(0);
  d.jump_reg = reg_from_name(j.at("jump-reg").get<std::string>()).value_or(0);
  d.stride = j.at("stride").get<int32_t>();
  d.reentry_addr = j.at("reentry-addr").get<uint64_t>();
  d.load_offset = j.at("load-offset").get<int32_t>();
  d.pre_increment = j.at("pre-increment").get<bool>();
  uint32_t side = 0;
  std::string side_str = j.at("side-writes").get<std::string>();
  size_t pos = 0;
  while (pos < side_str.size()) {
    size_t comma = side_str.find(',', pos);
    if (comma == std::string::npos) comma = side_str.size();
    auto reg = reg_from_name(side_str.substr(pos, comma - pos));
    if (reg) side |= reg_bit(*reg);
    pos = comma + 1;
  }
  d.side_writes = side;
  d.stage1_len = j.at("stage1-len").get<uint8_t>();
  d.stage2_len = j.at("stage2-len").get<uint8_t>();
  return d;
}

Json goal_to_json(const ChainGoal& g) {
  Json j;
  j["syscall"] = g.syscall_name;
  if (g.syscall_number)
    j["syscall-number"] = *g.syscall_number;
  else
    j["syscall-number"] = nullptr;
  j["required-regs"] = reg_map_to_json(g.required_regs);
  if (g.secret_region) {
    Json s;
    s["address"] = g.secret_region->address;
    s["length"] = g.secret_region->length;
    j["secret-region"] = std::move(s);
  } else {
    j["secret-region"] = nullptr;
  }
  return j;
}

ChainGoal goal_from_json(const Json& j) {
  ChainGoal g;
  g.syscall_name = j.at("syscall").get<std::string>();
  if (!j.at("syscall-number").is_null())
    g.syscall_number = j.at("syscall-number").get<uint32_t>();
  g.required_regs = reg_map_from_json(j.at("required-regs"));
  if (!j.at("secret-region").is_null()) {
    SecretRegion s;
    s.address = j.at("secret-region").at("address").get<uint64_t>();
    s.length = j.at("secret-region").at("length").get<uint64_t>();
    g.secret_region = s;
  }
  return g;
}

Json vuln_to_json(const VulnSpec& v) {
  Json j;
  j["buffer-addr"] = v.buffer_addr;
  j["capacity"] = v.capacity;
  j["pointer-offset"] = v.pointer_offset;
  if (v.table_addr)
    j["table-addr"] = *v.table_addr;
  else
    j["table-addr"] = nullptr;
  j["call-context"] = reg_map_to_json(v.call_context);
  return j;
}

VulnSpec vuln_from_json(const Json& j) {
  VulnSpec v;
  v.buffer_addr = j.at("buffer-addr").get<uint64_t>();
  v.capacity = j.at("capacity").get<uint64_t>();
  v.pointer_offset = j.at("pointer-offset").get<uint64_t>();
  if (!j.at("table-addr").is_null())
    v.table_addr = j.at("table-addr").get<uint64_t>();
  v.call_context = reg_map_from_json(j.at("call-context"));
  return v;
}

namespace {

Json options_to_json(const ScanOptions& o) {
  Json j;
  j["max-window"] = o.max_window;
  j["relax-imm"] = o.relax_imm;
  j["dispatcher-reg"] = reg_name(o.policy.dispatcher_reg);
  j["cursor-reg"] = reg_name(o.policy.table_cursor_reg);
  j["id-register"] = reg_name(o.conv.id_register);
  j["syscall-numbers"] = o.conv.syscall_numbers;
  j["two-stage-reentry"] =
      o.two_stage_reentry == ScanOptions::Reentry::Stage1 ? "stage1"
                                                          : "stage2";
  return j;
}

ScanOptions options_from_json(const Json& j) {
  ScanOptions o;
  o.max_window = j.at("max-window").get<unsigned>();
  o.relax_imm = j.at("relax-imm").get<bool>();
  o.policy.dispatcher_reg =
      reg_from_name(j.at("dispatcher-reg").get<std::string>()).value_or(kRegA3);
  o.policy.table_cursor_reg =
      reg_from_name(j.at("cursor-reg").get<std::string>()).value_or(kRegA4);
  o.conv.id_register =
      reg_from_name(j.at("id-register").get<std::string>()).value_or(kRegA7);
  o.conv.syscall_numbers =
      j.at("syscall-numbers").get<std::map<std::string, uint32_t>>();
  o.two_stage_reentry = j.at("two-stage-reentry").get<std::string>() == "stage2"
                            ? ScanOptions::Reentry::Stage2
                            : ScanOptions::Reentry::Stage1;
  return o;
}

}  // namespace

Json catalog_to_json(const CatalogDoc& doc) {
  Json j;
  j["schema-version"] = kSchemaVersion;
  j["kind"] = "catalog";
  j["input"] = doc.input;
  j["options"] = options_to_json(doc.options);
  Json cands = Json::array();
  for (const GadgetCandidate& c : doc.candidates)
    cands.push_back(candidate_to_json(c));
  j["candidates"] = std::move(cands);
  Json disps = Json::array();
  for (const DispatcherGadget& d : doc.dispatchers)
    disps.push_back(dispatcher_to_json(d));
  j["dispatchers"] = std::move(disps);
  j["chosen-dispatcher"] = doc.chosen_dispatcher;
  Json inits = Json::array();
  for (const GadgetCandidate& c : doc.initializers)
    inits.push_back(candidate_to_json(c));
  j["initializers"] = std::move(inits);
  return j;
}

CatalogDoc catalog_from_json(const Json& j) {
  if (j.value("kind", "") != std::string("catalog"))
    throw std::runtime_error("not a catalog document");
  CatalogDoc doc;
  doc.input = j.at("input").get<std::string>();
  doc.options = options_from_json(j.at("options"));
  for (const auto& c : j.at("candidates"))
    doc.candidates.push_back(candidate_from_json(c));
  for (const auto& d : j.at("dispatchers"))
    doc.dispatchers.push_back(dispatcher_from_json(d));
  doc.chosen_dispatcher = j.at("chosen-dispatcher").get<int>();
  for (const auto& c : j.at("initializers"))
    doc.initializers.push_back(candidate_from_json(c));
  return doc;
}

Json plan_to_json(const ChainPlan& plan, const std::string& input) {
  Json j;
  j["schema-version"] = kSchemaVersion;
  j["kind"] = "plan";
  j["input"] = input;
  j["xlen"] = xlen_bits(plan.xlen);
  j["goal"] = goal_to_json(plan.goal);
  j["dispatcher-reg"] = reg_name(plan.policy.dispatcher_reg);
  j["cursor-reg"] = reg_name(plan.policy.table_cursor_reg);
  j["dispatcher"] = dispatcher_to_json(plan.dispatcher);
  j["initializer"] = step_to_json(plan.initializer);
  j["dispatcher-slot"] = slot_to_json(plan.dispatcher_slot);
  j["cursor-slot"] = slot_to_json(plan.cursor_slot);
  Json steps = Json::array();
  for (const ChainStep& s : plan.steps) steps.push_back(step_to_json(s));
  j["steps"] = std::move(steps);
  j["table-entries"] = plan.table_entry_count();
  j["predicted-final-state"] = reg_map_to_json(plan.predicted_final_state);
  return j;
}

ChainPlan plan_from_json(const Json& j) {
  if (j.value("kind", "") != std::string("plan"))
    throw std::runtime_error("not a plan document");
  ChainPlan plan;
  plan.xlen = j.at("xlen").get<unsigned>() == 64 ? Xlen::Rv64 : Xlen::Rv32;
  plan.goal = goal_from_json(j.at("goal"));
  plan.policy.dispatcher_reg =
      reg_from_name(j.at("dispatcher-reg").get<std::string>()).value_or(kRegA3);
  plan.policy.table_cursor_reg =
      reg_from_name(j.at("cursor-reg").get<std::string>()).value_or(kRegA4);
  plan.dispatcher = dispatcher_from_json(j.at("dispatcher"));
  plan.initializer = step_from_json(j.at("initializer"));
  plan.dispatcher_slot = slot_from_json(j.at("dispatcher-slot"));
  plan.cursor_slot = slot_from_json(j.at("cursor-slot"));
  for (const auto& s : j.at("steps")) plan.steps.push_back(step_from_json(s));
  plan.predicted_final_state =
      reg_map_from_json(j.at("predicted-final-state"));
  return plan;
}

Json payload_to_json(const Payload& p, const DispatchTable& t) {
  Json j;
  j["schema-version"] = kSchemaVersion;
  j["kind"] = "payload";
  j["buffer-addr"] = p.buffer_addr;
  Json ptr;
  ptr["offset"] = p.pointer_offset;
  ptr["value"] = p.pointer_value;
  j["pointer"] = std::move(ptr);
  Json seeds = Json::array();
  for (const auto& [addr, value] : p.seed_words) {
    Json s;
    s["addr"] = addr;
    s["value"] = value;
    seeds.push_back(std::move(s));
  }
  j["seed-words"] = std::move(seeds);
  Json tab;
  tab["base-addr"] = t.base_addr;
  tab["entry-size"] = t.entry_size;
  tab["stride"] = t.stride;
  tab["cursor-seed"] = t.cursor_seed;
  tab["entries"] = t.entries;
  j["table"] = std::move(tab);
  j["table-in-buffer"] = p.table_in_buffer;
  j["table-span-addr"] = p.table_span_addr;
  j["buffer-hex"] = bytes_to_hex(p.buffer_fill);
  j["table-hex"] = bytes_to_hex(p.table_blob);
  return j;
}

PayloadDoc payload_from_json(const Json& j) {
  if (j.value("kind", "") != std::string("payload"))
    throw std::runtime_error("not a payload document");
  PayloadDoc doc;
  Payload& p = doc.payload;
  DispatchTable& t = doc.table;
  p.buffer_addr = j.at("buffer-addr").get<uint64_t>();
  p.pointer_offset = j.at("pointer").at("offset").get<uint64_t>();
  p.pointer_value = j.at("pointer").at("value").get<uint64_t>();
  for (const auto& s : j.at("seed-words"))
    p.seed_words.emplace_back(s.at("addr").get<uint64_t>(),
                              s.at("value").get<uint64_t>());
  t.base_addr = j.at("table").at("base-addr").get<uint64_t>();
  t.entry_size = j.at("table").at("entry-size").get<uint32_t>();
  t.stride = j.at("table").at("stride").get<int32_t>();
  t.cursor_seed = j.at("table").at("cursor-seed").get<uint64_t>();
  t.entries = j.at("table").at("entries").get<std::vector<uint64_t>>();
  p.table_in_buffer = j.at("table-in-buffer").get<bool>();
  p.table_span_addr = j.at("table-span-addr").get<uint64_t>();
  p.buffer_fill = hex_to_bytes(j.at("buffer-hex").get<std::string>());
  p.table_blob = hex_to_bytes(j.at("table-hex").get<std::string>());
  p.table_addr = t.base_addr;
  return doc;
}

Json verdict_to_json(const Verdict& v,
                     const std::vector<TraceSegment>& segments) {
  Json j;
  j["schema-version"] = kSchemaVersion;
  j["kind"] = "verdict";
  j["outcome"] = outcome_name(v.outcome);
  j["detail"] = v.detail;
  j["steps"] = v.steps;
  if (v.trap) {
    Json t;
    t["pc"] = v.trap->pc;
    Json regs = Json::object();
    for (uint8_t r = 0; r < 32; ++r) regs[reg_name(r)] = v.trap->regs[r];
    t["regs"] = std::move(regs);
    j["trap"] = std::move(t);
  } else {
    j["trap"] = nullptr;
  }
  if (v.fault) {
    Json f;
    f["kind"] = fault_name(v.fault->kind);
    f["pc"] = v.fault->pc;
    f["addr"] = v.fault->addr;
    j["fault"] = std::move(f);
  } else {
    j["fault"] = nullptr;
  }
  j["exfiltrated-hex"] = bytes_to_hex(v.exfiltrated);
  Json segs = Json::array();
  for (const TraceSegment& s : segments) {
    Json e;
    e["start-pc"] = s.start_pc;
    e["first-step"] = s.first_step;
    e["step-count"] = s.step_count;
    e["label"] = s.label;
    segs.push_back(std::move(e));
  }
  j["segments"] = std::move(segs);
  Json trace = Json::array();
  for (const TraceEntry& e : v.trace) {
    Json t;
    t["pc"] = e.pc;
    t["raw"] = e.raw;
    t["asm"] = e.text;
    if (e.written_reg) {
      t["wrote"] = reg_name(*e.written_reg);
      t["value"] = e.written_value;
    } else {
      t["wrote"] = nullptr;
      t["value"] = nullptr;
    }
    trace.push_back(std::move(t));
  }
  j["trace"] = std::move(trace);
  return j;
}

Json make_report(const Json& catalog, const Json& plan, const Json& payload,
                 const Json* verdict) {
  Json j;
  j["schema-version"] = kSchemaVersion;
  j["kind"] = "report";
  j["catalog"] = catalog;
  j["plan"] = plan;
  j["payload"] = payload;
  j["verdict"] = verdict ? *verdict : Json(nullptr);
  return j;
}

}  // namespace jopkit
