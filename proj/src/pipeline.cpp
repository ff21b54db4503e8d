#include "jopkit/pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

namespace jopkit {

namespace {

uint8_t reg_or_throw(const std::string& name) {
  auto r = reg_from_name(name);
  if (!r) throw std::runtime_error("unknown register name: " + name);
  return *r;
}

std::map<uint8_t, uint64_t> parse_reg_map(const Json& j) {
  std::map<uint8_t, uint64_t> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[reg_or_throw(it.key())] = it.value().get<uint64_t>();
  return out;
}

void parse_scan(const Json& j, ScanOptions& o) {
  if (j.contains("max-window")) o.max_window = j.at("max-window").get<unsigned>();
  if (j.contains("relax-imm")) o.relax_imm = j.at("relax-imm").get<bool>();
  if (j.contains("dispatcher-reg"))
    o.policy.dispatcher_reg =
        reg_or_throw(j.at("dispatcher-reg").get<std::string>());
  if (j.contains("cursor-reg"))
    o.policy.table_cursor_reg =
        reg_or_throw(j.at("cursor-reg").get<std::string>());
  if (j.contains("id-register"))
    o.conv.id_register = reg_or_throw(j.at("id-register").get<std::string>());
  if (j.contains("syscall-numbers"))
    o.conv.syscall_numbers =
        j.at("syscall-numbers").get<std::map<std::string, uint32_t>>();
  if (j.contains("two-stage-reentry"))
    o.two_stage_reentry =
        j.at("two-stage-reentry").get<std::string>() == "stage2"
            ? ScanOptions::Reentry::Stage2
            : ScanOptions::Reentry::Stage1;
}

void parse_goal(const Json& j, ChainGoal& g) {
  if (j.contains("syscall")) g.syscall_name = j.at("syscall").get<std::string>();
  if (j.contains("syscall-number") && !j.at("syscall-number").is_null())
    g.syscall_number = j.at("syscall-number").get<uint32_t>();
  if (j.contains("required-regs"))
    g.required_regs = parse_reg_map(j.at("required-regs"));
  if (j.contains("secret-region") && !j.at("secret-region").is_null()) {
    SecretRegion s;
    s.address = j.at("secret-region").at("address").get<uint64_t>();
    s.length = j.at("secret-region").at("length").get<uint64_t>();
    g.secret_region = s;
  }
}

void parse_vuln(const Json& j, VulnSpec& v) {
  if (j.contains("buffer-addr")) v.buffer_addr = j.at("buffer-addr").get<uint64_t>();
  if (j.contains("capacity")) v.capacity = j.at("capacity").get<uint64_t>();
  if (j.contains("pointer-offset"))
    v.pointer_offset = j.at("pointer-offset").get<uint64_t>();
  if (j.contains("table-addr") && !j.at("table-addr").is_null())
    v.table_addr = j.at("table-addr").get<uint64_t>();
  if (j.contains("call-context"))
    v.call_context = parse_reg_map(j.at("call-context"));
}

void parse_syscall(const Json& j, SyscallResolution& r) {
  if (j.contains("addr") && !j.at("addr").is_null())
    r.explicit_addr = j.at("addr").get<uint64_t>();
  if (j.contains("symbol") && !j.at("symbol").is_null())
    r.symbol = j.at("symbol").get<std::string>();
  if (j.contains("offset") && !j.at("offset").is_null())
    r.offset = j.at("offset").get<int64_t>();
}

void parse_exec(const Json& j, ExecOptions& e) {
  if (j.contains("max-steps")) e.max_steps = j.at("max-steps").get<uint64_t>();
  if (j.contains("trace")) e.trace = j.at("trace").get<bool>();
}

// Dispatcher the safety filter assumes when the scan found none; only its
// register fields matter there.
DispatcherGadget placeholder_dispatcher(const ScanOptions& opt) {
  DispatcherGadget d;
  d.table_cursor_reg = opt.policy.table_cursor_reg;
  d.jump_reg = 0;
  return d;
}

// Function epilogues match the dispatcher shape too (load ra through sp,
// bump sp, jalr); rank candidates that walk the reserved cursor register
// first so the planner gets one the initializer can actually drive.
int pick_dispatcher(const std::vector<DispatcherGadget>& ds,
                    const ReservedPolicy& policy) {
  auto rank = [&](const DispatcherGadget& d) {
    return std::tuple(d.table_cursor_reg != policy.table_cursor_reg,
                      unsigned(d.stage1_len) + d.stage2_len, d.stage1_addr);
  };
  int best = -1;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (best < 0 || rank(ds[i]) < rank(ds[best])) best = static_cast<int>(i);
  }
  return best;
}

const GadgetCandidate& pick_initializer(
    const std::vector<GadgetCandidate>& inits) {
  if (inits.empty())
    throw PlanError(PlanError::Kind::NoInitializer,
                    "catalog holds no initializer gadget");
  const GadgetCandidate* best = &inits[0];
  for (const GadgetCandidate& c : inits) {
    if (c.length() < best->length() ||
        (c.length() == best->length() && c.start_addr < best->start_addr))
      best = &c;
  }
  return *best;
}

// The system-call window is not jalr-terminated, so the scan never lists it;
// decode it here so the trace labeler can still name that segment.
std::vector<GadgetCandidate> label_catalog(const CatalogDoc& doc,
                                           const ChainPlan& plan,
                                           const ElfImage& image) {
  std::vector<GadgetCandidate> out = doc.candidates;
  GadgetCandidate sys;
  sys.start_addr = plan.syscall_entry_addr();
  uint64_t pc = sys.start_addr;
  for (int i = 0; i < 16; ++i) {
    auto w = image.word_at(pc);
    if (!w) break;
    auto ins = decode(*w, pc);
    if (!ins) break;
    sys.instructions.push_back(*ins);
    if (ins->mnemonic == Mnemonic::Ecall || is_control_transfer(ins->mnemonic))
      break;
    pc += 4;
  }
  if (!sys.instructions.empty()) {
    sys.summary = summarize(sys.instructions);
    sys.family = Family::SystemCall;
    out.push_back(std::move(sys));
  }
  return out;
}

}  // namespace

RunConfig config_from_json(const Json& j, RunConfig base) {
  RunConfig c = std::move(base);
  if (j.contains("input")) c.input = j.at("input").get<std::string>();
  if (j.contains("scan")) parse_scan(j.at("scan"), c.scan);
  if (j.contains("goal")) parse_goal(j.at("goal"), c.goal);
  if (j.contains("vuln")) parse_vuln(j.at("vuln"), c.vuln);
  if (j.contains("syscall")) parse_syscall(j.at("syscall"), c.syscall);
  if (j.contains("exec")) parse_exec(j.at("exec"), c.exec);
  return c;
}

Json stage_scan(const RunConfig& config) {
  ElfImage image = ElfImage::load_file(config.input);
  ScanResult res = scan_image_parallel(image, config.scan);

  CatalogDoc doc;
  doc.input = config.input;
  doc.options = config.scan;
  doc.dispatchers = res.dispatchers;
  doc.initializers = res.initializers;
  doc.chosen_dispatcher =
      pick_dispatcher(res.dispatchers, config.scan.policy);

  const DispatcherGadget disp =
      doc.chosen_dispatcher >= 0 ? res.dispatchers[doc.chosen_dispatcher]
                                 : placeholder_dispatcher(config.scan);
  std::map<std::pair<uint64_t, size_t>, std::optional<int32_t>> kept;
  for (const GadgetCandidate& c :
       filter_safe(res.candidates, config.scan, disp))
    kept[{c.start_addr, c.length()}] = c.relaxed_imm;

  doc.candidates = std::move(res.candidates);
  for (GadgetCandidate& c : doc.candidates) {
    auto it = kept.find({c.start_addr, c.length()});
    if (it == kept.end()) continue;
    c.safe = true;
    c.relaxed_imm = it->second;
  }
  return catalog_to_json(doc);
}

Json stage_plan(const RunConfig& config, const Json& catalog) {
  CatalogDoc doc = catalog_from_json(catalog);
  const std::string input = config.input.empty() ? doc.input : config.input;
  ElfImage image = ElfImage::load_file(input);

  if (doc.chosen_dispatcher < 0 ||
      doc.chosen_dispatcher >= static_cast<int>(doc.dispatchers.size()))
    throw PlanError(PlanError::Kind::NoDispatcher,
                    "catalog holds no dispatcher gadget");
  const DispatcherGadget& disp = doc.dispatchers[doc.chosen_dispatcher];
  const GadgetCandidate& init = pick_initializer(doc.initializers);

  std::vector<GadgetCandidate> safe;
  for (const GadgetCandidate& c : doc.candidates)
    if (c.safe) safe.push_back(c);

  ChainPlan plan = plan_chain(config.goal, safe, disp, init, image,
                              doc.options, config.syscall);
  return plan_to_json(plan, input);
}

Json stage_emit(const RunConfig& config, const Json& plan_doc) {
  ChainPlan plan = plan_from_json(plan_doc);
  DispatchTable table = build_dispatch_table(
      plan, choose_table_base(config.vuln, xlen_bytes(plan.xlen)));
  Payload payload = build_payload(plan, table, config.vuln);
  return payload_to_json(payload, table);
}

Json stage_verify(const RunConfig& config, const Json& plan_doc,
                  const Json& payload_doc, const Json* catalog) {
  ChainPlan plan = plan_from_json(plan_doc);
  PayloadDoc pd = payload_from_json(payload_doc);
  const std::string input = config.input.empty()
                                ? plan_doc.at("input").get<std::string>()
                                : config.input;
  ElfImage image = ElfImage::load_file(input);

  Verdict verdict =
      execute(image, pd.payload, config.vuln, plan.goal, config.exec);

  CatalogDoc cat;
  if (catalog) cat = catalog_from_json(*catalog);
  std::vector<TraceSegment> segments = trace_gadgets(
      verdict, label_catalog(cat, plan, image), plan.dispatcher);
  return verdict_to_json(verdict, segments);
}

AttackResult run_attack(const RunConfig& config) {
  AttackResult r;
  r.catalog = stage_scan(config);
  r.plan = stage_plan(config, r.catalog);
  r.payload = stage_emit(config, r.plan);
  r.verdict = stage_verify(config, r.plan, r.payload, &r.catalog);
  r.report = make_report(r.catalog, r.plan, r.payload, &r.verdict);
  r.goal_met = r.verdict.at("outcome").get<std::string>() ==
               outcome_name(Outcome::GoalMet);
  return r;
}

}  // namespace jopkit
