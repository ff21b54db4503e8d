#include "jopkit/elf_image.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace jopkit {

namespace {

constexpr uint16_t kMachineRiscv = 243;

constexpr uint32_t kShtProgbits = 1;
constexpr uint32_t kShtSymtab = 2;
constexpr uint32_t kShtStrtab = 3;
constexpr uint32_t kShtRela = 4;
constexpr uint32_t kShtNobits = 8;
constexpr uint32_t kShtDynsym = 11;

constexpr uint64_t kShfWrite = 0x1;
constexpr uint64_t kShfAlloc = 0x2;
constexpr uint64_t kShfExec = 0x4;

constexpr uint32_t kPtLoad = 1;
constexpr uint32_t kPfX = 0x1;
constexpr uint32_t kPfW = 0x2;

constexpr uint32_t kRelocJumpSlot = 5;  // R_RISCV_JUMP_SLOT

[[noreturn]] void malformed(const std::string& what) {
  throw LoadError(LoadError::Kind::Malformed, what);
}

// Bounds-checked little-endian reader over the raw file bytes.
class Cursor {
 public:
  explicit Cursor(const std::vector<uint8_t>& b) : bytes_(b) {}

  uint64_t size() const { return bytes_.size(); }

  uint8_t u8(uint64_t off) const {
    check(off, 1);
    return bytes_[off];
  }
  uint16_t u16(uint64_t off) const {
    check(off, 2);
    return static_cast<uint16_t>(bytes_[off] | (bytes_[off + 1] << 8));
  }
  uint32_t u32(uint64_t off) const {
    check(off, 4);
    return static_cast<uint32_t>(bytes_[off]) |
           (static_cast<uint32_t>(bytes_[off + 1]) << 8) |
           (static_cast<uint32_t>(bytes_[off + 2]) << 16) |
           (static_cast<uint32_t>(bytes_[off + 3]) << 24);
  }
  uint64_t u64(uint64_t off) const {
    return static_cast<uint64_t>(u32(off)) |
           (static_cast<uint64_t>(u32(off + 4)) << 32);
  }

  std::vector<uint8_t> slice(uint64_t off, uint64_t len) const {
    check(off, len);
    return {bytes_.begin() + static_cast<ptrdiff_t>(off),
            bytes_.begin() + static_cast<ptrdiff_t>(off + len)};
  }

  std::string cstr(uint64_t off) const {
    if (off >= bytes_.size()) malformed("string offset past end of file");
    std::string s;
    while (off < bytes_.size() && bytes_[off] != 0)
      s.push_back(static_cast<char>(bytes_[off++]));
    return s;
  }

 private:
  void check(uint64_t off, uint64_t len) const {
    if (len > bytes_.size() || off > bytes_.size() - len)
      malformed("read past end of file");
  }

  const std::vector<uint8_t>& bytes_;
};

struct Shdr {
  std::string name;
  uint32_t type = 0;
  uint64_t flags = 0;
  uint64_t addr = 0;
  uint64_t offset = 0;
  uint64_t size = 0;
  uint32_t link = 0;
  uint64_t entsize = 0;
};

}  // namespace

ElfImage ElfImage::load_file(const std::string& path, const LoadOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Kind::NotElf, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return load_bytes(bytes, opt);
}

ElfImage ElfImage::load_bytes(const std::vector<uint8_t>& bytes,
                              const LoadOptions& opt) {
  if (bytes.size() < 4 || bytes[0] != 0x7F || bytes[1] != 'E' ||
      bytes[2] != 'L' || bytes[3] != 'F')
    throw LoadError(LoadError::Kind::NotElf, "bad ELF magic");
  if (bytes.size() < 52) malformed("file shorter than an ELF32 header");

  Cursor c(bytes);
  const uint8_t klass = c.u8(4);
  const uint8_t data = c.u8(5);
  if (data != 1)
    throw LoadError(LoadError::Kind::UnsupportedClass,
                    "big-endian ELF not supported");
  const bool is64 = klass == 2;
  if (klass != 1 && klass != 2)
    throw LoadError(LoadError::Kind::UnsupportedClass, "unknown ELF class");
  if (is64 && !opt.allow_rv64)
    throw LoadError(LoadError::Kind::UnsupportedClass,
                    "64-bit ELF (configure rv64 to accept)");

  ElfImage img;
  img.xlen_ = is64 ? Xlen::Rv64 : Xlen::Rv32;

  const uint16_t machine = c.u16(18);
  if (machine != kMachineRiscv)
    throw LoadError(LoadError::Kind::UnsupportedClass,
                    "ELF machine is not RISC-V");

  uint64_t phoff, shoff, entry;
  uint16_t phentsize, phnum, shentsize, shnum, shstrndx;
  if (is64) {
    entry = c.u64(24);
    phoff = c.u64(32);
    shoff = c.u64(40);
    phentsize = c.u16(54);
    phnum = c.u16(56);
    shentsize = c.u16(58);
    shnum = c.u16(60);
    shstrndx = c.u16(62);
  } else {
    entry = c.u32(24);
    phoff = c.u32(28);
    shoff = c.u32(32);
    phentsize = c.u16(42);
    phnum = c.u16(44);
    shentsize = c.u16(46);
    shnum = c.u16(48);
    shstrndx = c.u16(50);
  }
  img.entry_ = entry;

  std::vector<Shdr> shdrs;
  if (shoff != 0 && shnum != 0) {
    const uint16_t want = is64 ? 64 : 40;
    if (shentsize < want) malformed("section header entry too small");
    shdrs.reserve(shnum);
    for (uint16_t i = 0; i < shnum; ++i) {
      const uint64_t off = shoff + static_cast<uint64_t>(i) * shentsize;
      Shdr s;
      if (is64) {
        s.type = c.u32(off + 4);
        s.flags = c.u64(off + 8);
        s.addr = c.u64(off + 16);
        s.offset = c.u64(off + 24);
        s.size = c.u64(off + 32);
        s.link = c.u32(off + 40);
        s.entsize = c.u64(off + 56);
      } else {
        s.type = c.u32(off + 4);
        s.flags = c.u32(off + 8);
        s.addr = c.u32(off + 12);
        s.offset = c.u32(off + 16);
        s.size = c.u32(off + 20);
        s.link = c.u32(off + 24);
        s.entsize = c.u32(off + 36);
      }
      shdrs.push_back(s);
    }
    if (shstrndx < shdrs.size()) {
      const Shdr& str = shdrs[shstrndx];
      for (uint16_t i = 0; i < shnum; ++i) {
        const uint64_t off = shoff + static_cast<uint64_t>(i) * shentsize;
        const uint32_t nameoff = c.u32(off);
        if (str.offset + nameoff < c.size())
          shdrs[i].name = c.cstr(str.offset + nameoff);
      }
    }
  }

  for (const Shdr& s : shdrs) {
    if (!(s.flags & kShfAlloc)) continue;
    if (s.type != kShtProgbits && s.type != kShtNobits) continue;
    Section sec;
    sec.name = s.name;
    sec.addr = s.addr;
    sec.exec = (s.flags & kShfExec) != 0;
    sec.write = (s.flags & kShfWrite) != 0;
    if (s.type == kShtNobits)
      sec.bytes.assign(s.size, 0);
    else
      sec.bytes = c.slice(s.offset, s.size);
    if (!sec.bytes.empty()) img.sections_.push_back(std::move(sec));
  }

  // Headerless or sectionless files: fall back to the load segments.
  if (img.sections_.empty() && phoff != 0 && phnum != 0) {
    int n = 0;
    for (uint16_t i = 0; i < phnum; ++i) {
      const uint64_t off = phoff + static_cast<uint64_t>(i) * phentsize;
      uint32_t type, flags;
      uint64_t fileoff, vaddr, filesz, memsz;
      if (is64) {
        type = c.u32(off);
        flags = c.u32(off + 4);
        fileoff = c.u64(off + 8);
        vaddr = c.u64(off + 16);
        filesz = c.u64(off + 32);
        memsz = c.u64(off + 40);
      } else {
        type = c.u32(off);
        fileoff = c.u32(off + 4);
        vaddr = c.u32(off + 8);
        filesz = c.u32(off + 16);
        memsz = c.u32(off + 20);
        flags = c.u32(off + 24);
      }
      if (type != kPtLoad || memsz == 0) continue;
      Section sec;
      sec.name = "segment" + std::to_string(n++);
      sec.addr = vaddr;
      sec.exec = (flags & kPfX) != 0;
      sec.write = (flags & kPfW) != 0;
      sec.bytes = c.slice(fileoff, filesz);
      sec.bytes.resize(memsz, 0);
      img.sections_.push_back(std::move(sec));
    }
  }

  auto read_symbols = [&](const Shdr& s, bool dynamic) {
    if (s.link >= shdrs.size()) return;
    const Shdr& str = shdrs[s.link];
    const uint64_t esz = s.entsize ? s.entsize : (is64 ? 24 : 16);
    for (uint64_t off = s.offset; off + esz <= s.offset + s.size; off += esz) {
      Symbol sym;
      uint32_t nameoff;
      uint16_t shndx;
      if (is64) {
        nameoff = c.u32(off);
        shndx = c.u16(off + 6);
        sym.value = c.u64(off + 8);
        sym.size = c.u64(off + 16);
      } else {
        nameoff = c.u32(off);
        sym.value = c.u32(off + 4);
        sym.size = c.u32(off + 8);
        shndx = c.u16(off + 14);
      }
      if (nameoff == 0 || shndx == 0) continue;  // skip undefined symbols
      sym.name = c.cstr(str.offset + nameoff);
      if (sym.name.empty()) continue;
      sym.dynamic = dynamic;
      img.symbols_.push_back(std::move(sym));
    }
  };

  const Shdr* dynsym = nullptr;
  for (const Shdr& s : shdrs) {
    if (s.type == kShtSymtab) read_symbols(s, false);
    if (s.type == kShtDynsym) {
      read_symbols(s, true);
      dynsym = &s;
    }
  }

  // PLT naming: walk the jump-slot relocations to map GOT slots to dynamic
  // symbol names, then decode each stub to find which slot it loads.
  std::vector<std::pair<uint64_t, std::string>> got_names;
  for (const Shdr& s : shdrs) {
    if (s.type != kShtRela || s.name != ".rela.plt" || !dynsym) continue;
    const uint64_t esz = s.entsize ? s.entsize : (is64 ? 24 : 12);
    const uint64_t symsz = is64 ? 24 : 16;
    for (uint64_t off = s.offset; off + esz <= s.offset + s.size; off += esz) {
      uint64_t r_offset;
      uint64_t r_info;
      if (is64) {
        r_offset = c.u64(off);
        r_info = c.u64(off + 8);
      } else {
        r_offset = c.u32(off);
        r_info = c.u32(off + 4);
      }
      const uint32_t type =
          is64 ? static_cast<uint32_t>(r_info & 0xFFFFFFFF)
               : static_cast<uint32_t>(r_info & 0xFF);
      const uint32_t symidx =
          is64 ? static_cast<uint32_t>(r_info >> 32)
               : static_cast<uint32_t>(r_info >> 8);
      if (type != kRelocJumpSlot) continue;
      const uint64_t symoff = dynsym->offset + symidx * symsz;
      const uint32_t nameoff = c.u32(symoff);
      if (dynsym->link >= shdrs.size()) continue;
      std::string name = c.cstr(shdrs[dynsym->link].offset + nameoff);
      got_names.emplace_back(r_offset, std::move(name));
    }
  }

  for (const Section& sec : img.sections_) {
    if (!sec.exec) continue;
    if (sec.name != ".plt" && sec.name != ".plt.sec") continue;
    // Stubs are 16 bytes: auipc rX, hi ; load rX, lo(rX) ; jalr rY ; pad.
    // The linker's header occupies the first 32 bytes.
    for (uint64_t pos = 32; pos + 16 <= sec.bytes.size(); pos += 16) {
      const uint64_t stub = sec.addr + pos;
      auto word = [&](int i) {
        uint32_t w = 0;
        std::memcpy(&w, sec.bytes.data() + pos + i * 4, 4);
        return w;
      };
      auto a = decode(word(0), stub);
      auto l = decode(word(1), stub + 4);
      auto j = decode(word(2), stub + 8);
      if (!a || !l || !j) continue;
      if (a->mnemonic != Mnemonic::Auipc || !is_load(l->mnemonic) ||
          j->mnemonic != Mnemonic::Jalr)
        continue;
      if (l->rs1 != a->rd || j->rs1 != l->rd) continue;
      const uint64_t got =
          (stub + (static_cast<uint64_t>(*a->imm) << 12) +
           static_cast<uint64_t>(static_cast<int64_t>(*l->imm))) &
          xlen_mask(img.xlen_);
      PltEntry e;
      e.stub_addr = stub;
      e.got_addr = got;
      for (const auto& [slot, name] : got_names) {
        if (slot == got) {
          e.name = name;
          break;
        }
      }
      img.plt_.push_back(std::move(e));
    }
  }

  img.validate();
  return img;
}

ElfImage ElfImage::from_sections(Xlen xlen, uint64_t entry,
                                 std::vector<Section> sections) {
  ElfImage img;
  img.xlen_ = xlen;
  img.entry_ = entry;
  img.sections_ = std::move(sections);
  img.validate();
  return img;
}

void ElfImage::validate() const {
  std::vector<const Section*> ex = exec_sections();
  std::sort(ex.begin(), ex.end(), [](const Section* a, const Section* b) {
    return a->addr < b->addr;
  });
  for (size_t i = 1; i < ex.size(); ++i) {
    if (ex[i - 1]->addr + ex[i - 1]->size() > ex[i]->addr)
      malformed("executable sections overlap: " + ex[i - 1]->name + " and " +
                ex[i]->name);
  }
}

const Section* ElfImage::section(std::string_view name) const {
  for (const Section& s : sections_)
    if (s.name == name) return &s;
  return nullptr;
}

const Section* ElfImage::section_at(uint64_t addr) const {
  for (const Section& s : sections_)
    if (s.contains(addr)) return &s;
  return nullptr;
}

const Symbol* ElfImage::symbol(std::string_view name) const {
  for (const Symbol& s : symbols_)
    if (s.name == name) return &s;
  return nullptr;
}

const PltEntry* ElfImage::plt_at(uint64_t stub_addr) const {
  for (const PltEntry& e : plt_)
    if (e.stub_addr == stub_addr) return &e;
  return nullptr;
}

std::vector<const Section*> ElfImage::exec_sections() const {
  std::vector<const Section*> out;
  for (const Section& s : sections_)
    if (s.exec) out.push_back(&s);
  return out;
}

bool ElfImage::is_exec(uint64_t addr) const {
  const Section* s = section_at(addr);
  return s && s->exec;
}

std::optional<uint8_t> ElfImage::byte_at(uint64_t addr) const {
  const Section* s = section_at(addr);
  if (!s) return std::nullopt;
  return s->bytes[addr - s->addr];
}

std::optional<uint32_t> ElfImage::word_at(uint64_t addr) const {
  uint32_t w = 0;
  for (int i = 0; i < 4; ++i) {
    auto b = byte_at(addr + i);
    if (!b) return std::nullopt;
    w |= static_cast<uint32_t>(*b) << (8 * i);
  }
  return w;
}

}  // namespace jopkit
