#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "jopkit/isa.hpp"

namespace jopkit {

class LoadError : public std::runtime_error {
 public:
  enum class Kind { NotElf, UnsupportedClass, Malformed };

  LoadError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Section {
  std::string name;
  uint64_t addr = 0;
  std::vector<uint8_t> bytes;  // zero-filled for NOBITS sections
  bool exec = false;
  bool write = false;

  uint64_t size() const { return bytes.size(); }
  bool contains(uint64_t a) const {
    return a >= addr && a < addr + bytes.size();
  }
};

struct Symbol {
  std::string name;
  uint64_t value = 0;
  uint64_t size = 0;
  bool dynamic = false;  // came from .dynsym rather than .symtab
};

struct PltEntry {
  std::string name;  // empty when no relocation info names the stub
  uint64_t stub_addr = 0;
  uint64_t got_addr = 0;
};

struct LoadOptions {
  bool allow_rv64 = false;
};

// Immutable view of one loaded binary. Safe to share across threads.
class ElfImage {
 public:
  static ElfImage load_file(const std::string& path,
                            const LoadOptions& opt = {});
  static ElfImage load_bytes(const std::vector<uint8_t>& bytes,
                             const LoadOptions& opt = {});
  // Assemble an image directly from sections; unit-test entry point.
  static ElfImage from_sections(Xlen xlen, uint64_t entry,
                                std::vector<Section> sections);

  Xlen xlen() const { return xlen_; }
  uint64_t entry_point() const { return entry_; }
  const std::vector<Section>& sections() const { return sections_; }
  const std::vector<Symbol>& symbols() const { return symbols_; }
  const std::vector<PltEntry>& plt_entries() const { return plt_; }

  const Section* section(std::string_view name) const;
  const Section* section_at(uint64_t addr) const;
  const Symbol* symbol(std::string_view name) const;
  const PltEntry* plt_at(uint64_t stub_addr) const;

  std::vector<const Section*> exec_sections() const;
  bool is_exec(uint64_t addr) const;

  std::optional<uint8_t> byte_at(uint64_t addr) const;
  std::optional<uint32_t> word_at(uint64_t addr) const;

 private:
  Xlen xlen_ = Xlen::Rv32;
  uint64_t entry_ = 0;
  std::vector<Section> sections_;
  std::vector<Symbol> symbols_;
  std::vector<PltEntry> plt_;

  void validate() const;
};

}  // namespace jopkit
