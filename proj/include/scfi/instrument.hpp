// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_INSTRUMENT_HPP_
#define SCFI_INSTRUMENT_HPP_

#include <cassert>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "scfi/assembler.hpp"
#include "scfi/cfg.hpp"
#include "scfi/isa.hpp"
#include "scfi/metadata.hpp"

namespace scfi::instrument {

// x31 carries the entered-indirectly flag; x28 is the scratch register for
// 20-bit tweak immediates.
inline constexpr uint8_t kFlagReg = 31;
inline constexpr uint8_t kScratchReg = 28;

class InstrumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Ref : uint8_t {
  kNone,
  kLabel,        // intra-function label
  kFuncStart,    // function start (entry thunk when present)
  kFuncBody,     // direct-call entry point (after the thunk)
  kFuncHi,       // %hi / %lo of the function start address
  kFuncLo,
};

struct TaggedInstr {
  isa::Instruction ins;
  uint32_t domain = 0;  // tweak under which this instruction's block is encrypted
  Ref ref = Ref::kNone;
  std::string sym;
  bool inserted = false;  // added by instrumentation (size accounting)
};

struct InstrFunction {
  std::string name;
  std::vector<TaggedInstr> code;  // always an even number of slots
  std::map<std::string, size_t> labels;
  size_t direct_entry = 0;  // slot index direct calls are retargeted to
};

struct Accounting {
  size_t switch_instrs = 0;   // csrrwi / lui+csrrw tweak writes
  size_t align_nops = 0;      // nops aligning switches and domain changes
  size_t thunk_instrs = 0;    // indirect entry points
  size_t epilogue_instrs = 0; // shared exit points
  size_t flag_save_instrs = 0;
  size_t pad_instrs = 0;      // trailing function padding

  size_t total_instrs() const {
    return switch_instrs + align_nops + thunk_instrs + epilogue_instrs +
           flag_save_instrs + pad_instrs;
  }
  size_t total_bytes() const { return 4 * total_instrs(); }
};

struct InstrumentedProgram {
  std::vector<InstrFunction> functions;
  cfg::TweakAssignment tweaks;
  std::string entry;
  Accounting accounting;

  const InstrFunction *find(const std::string &name) const {
    for (const auto &f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
};

using MemoryImage = std::map<uint64_t, uint64_t>;  // 8-byte-aligned addr -> Block64

struct LayoutResult {
  MemoryImage image;
  meta::MetadataFile metadata;
  std::map<std::string, uint64_t> start;  // function -> absolute start
  uint64_t entry_addr = 0;
  uint32_t entry_tweak = 0;
};

namespace detail {

// Emits the instruction stream of one function, keeping every tweak-domain
// transition on a 64-bit block boundary.
class FunctionBuilder {
 public:
  FunctionBuilder(InstrFunction &fn, Accounting &acct, uint8_t width)
      : fn_(fn), acct_(acct), width_(width) {}

  size_t pos() const { return fn_.code.size(); }

  void emit(const isa::Instruction &ins, uint32_t domain, bool inserted,
            Ref ref = Ref::kNone, std::string sym = {}) {
    size_t p = pos();
    if ((p & 1) && fn_.code[p - 1].domain != domain) {
      // Domain changes mid-block: finish the block with a pad nop in the
      // old domain.
      fn_.code.push_back({isa::nop(), fn_.code[p - 1].domain, Ref::kNone, {}, true});
      ++acct_.align_nops;
    }
    fn_.code.push_back({ins, domain, ref, std::move(sym), inserted});
  }

  // csrrwi (5-bit) or lui+csrrw (20-bit) writing `value` to csr_tweak. The
  // CSR write lands in the last slot of its block, so the next instruction
  // starts a fresh block and is fetched under the new tweak.
  void emit_tweak_switch(uint32_t value, uint32_t domain, size_t *counter = nullptr) {
    size_t *c = counter ? counter : &acct_.switch_instrs;
    if (width_ == 5) {
      if ((pos() & 1) == 0) {
        emit(isa::nop(), domain, true);
        ++acct_.align_nops;
      }
      emit({isa::Op::kCsrrwi, 0, 0, 0, int32_t(value), isa::kCsrTweak}, domain, true);
      ++*c;
    } else {
      if (pos() & 1) {
        emit(isa::nop(), domain, true);
        ++acct_.align_nops;
      }
      emit({isa::Op::kLui, kScratchReg, 0, 0, int32_t(value), 0}, domain, true);
      emit({isa::Op::kCsrrw, 0, kScratchReg, 0, 0, isa::kCsrTweak}, domain, true);
      *c += 2;
    }
    assert((pos() & 1) == 0 && "tweak switch must end at a block boundary");
  }

  void bind_label(const std::string &name) { fn_.labels[name] = pos(); }

  // Pads to a block boundary (pad executes in the previous domain). Needed
  // before binding a label whose code starts a new domain.
  void align() {
    if (pos() & 1) {
      fn_.code.push_back({isa::nop(), fn_.code.back().domain, Ref::kNone, {}, true});
      ++acct_.align_nops;
    }
  }

  void finish(uint32_t domain) {
    if (pos() & 1) {
      fn_.code.push_back({isa::nop(), fn_.code.back().domain, Ref::kNone, {}, true});
      ++acct_.pad_instrs;
    }
    (void)domain;
  }

 private:
  InstrFunction &fn_;
  Accounting &acct_;
  uint8_t width_;
};

inline Ref from_asm_ref(asmparse::RefKind k) {
  switch (k) {
    case asmparse::RefKind::kLabel: return Ref::kLabel;
    case asmparse::RefKind::kFunc: return Ref::kFuncStart;
    case asmparse::RefKind::kFuncHi: return Ref::kFuncHi;
    case asmparse::RefKind::kFuncLo: return Ref::kFuncLo;
    default: return Ref::kNone;
  }
}

inline bool function_has_calls(const asmparse::Function &fn) {
  for (const auto &si : fn.instrs) {
    if (si.ref == asmparse::RefKind::kFunc && si.ins.op == isa::Op::kJal) return true;
    if (si.ins.op == isa::Op::kJalr && !si.is_return) return true;
  }
  return false;
}

}  // namespace detail

// Rewrites the program so that every inter-function control transfer switches
// the tweak CSR, every indirectly callable function gets an entry/exit point
// under its class tweak, and every 64-bit block has exactly one tweak domain.
inline InstrumentedProgram instrument(const asmparse::SourceProgram &p,
                                      const cfg::TweakAssignment &t) {
  using namespace detail;
  InstrumentedProgram out;
  out.tweaks = t;
  out.entry = p.entry;

  if (t.width == 20) {
    for (const auto &fn : p.functions)
      for (const auto &si : fn.instrs)
        if (si.ins.rd == kScratchReg || si.ins.rs1 == kScratchReg ||
            (si.ins.op != isa::Op::kCsrrwi && si.ins.rs2 == kScratchReg))
          throw InstrumentError("line " + std::to_string(si.line) +
                                ": x28 is reserved for 20-bit tweak switches");
  }

  for (const auto &src : p.functions) {
    out.functions.push_back({src.name, {}, {}, 0});
    InstrFunction &fn = out.functions.back();
    FunctionBuilder b(fn, out.accounting, t.width);

    const uint32_t body = t.body_tweak.at(src.name);
    auto cls = t.class_id(src.name);
    const bool member = cls.has_value();
    const uint32_t entry_tw = member ? t.entry_tweak.at(*cls) : 0;
    const bool save_flag = member && function_has_calls(src);

    if (member) {
      // Entry point, encrypted under the class tweak: raise the flag, switch
      // to the body tweak, then skip the direct-entry flag clear.
      b.emit({isa::Op::kAddi, kFlagReg, 0, 0, 1, 0}, entry_tw, true);
      ++out.accounting.thunk_instrs;
      b.emit_tweak_switch(body, entry_tw, &out.accounting.thunk_instrs);
      b.emit({isa::Op::kJal, 0, 0, 0, 0, 0}, body, true, Ref::kLabel, ".body");
      ++out.accounting.thunk_instrs;
      fn.direct_entry = b.pos();
      b.emit({isa::Op::kAddi, kFlagReg, 0, 0, 0, 0}, body, true);
      ++out.accounting.thunk_instrs;
      b.bind_label(".body");
      if (save_flag) {
        b.emit({isa::Op::kAddi, 2, 2, 0, -4, 0}, body, true);
        b.emit({isa::Op::kSw, 0, 2, kFlagReg, 0, 0}, body, true);
        out.accounting.flag_save_instrs += 2;
      }
    }

    // Invert the label map so source labels bind to the first instruction
    // emitted for their source instruction.
    std::map<size_t, std::vector<std::string>> labels_at;
    for (const auto &[name, idx] : src.labels) labels_at[idx].push_back(name);

    for (size_t i = 0; i < src.instrs.size(); ++i) {
      const auto &si = src.instrs[i];
      size_t first = b.pos();

      if (si.ins.op == isa::Op::kJal && si.ref == asmparse::RefKind::kFunc) {
        // Direct call: switch to the callee's body tweak; the call and the
        // post-call restore execute (and are encrypted) under it.
        const uint32_t callee_tw = t.body_tweak.at(si.sym);
        b.emit_tweak_switch(callee_tw, body);
        Ref target = t.class_id(si.sym) ? Ref::kFuncBody : Ref::kFuncStart;
        b.emit(si.ins, callee_tw, false, target, si.sym);
        b.emit_tweak_switch(body, callee_tw);
      } else if (si.ins.op == isa::Op::kJalr && !si.is_return) {
        const auto c = t.class_id(si.targets.front());
        if (!c)
          throw InstrumentError("indirect target '" + si.targets.front() +
                                "' has no entry tweak class");
        const uint32_t class_tw = t.entry_tweak.at(*c);
        b.emit_tweak_switch(class_tw, body);
        b.emit(si.ins, class_tw, false);
        b.emit_tweak_switch(body, class_tw);
      } else if (si.is_return && member) {
        // All returns funnel through the shared exit point.
        b.emit({isa::Op::kJal, 0, 0, 0, 0, 0}, body, true, Ref::kLabel, ".exit");
      } else {
        b.emit(si.ins, body, false, from_asm_ref(si.ref), si.sym);
      }

      if (auto it = labels_at.find(i); it != labels_at.end())
        for (const auto &name : it->second) fn.labels[name] = first;
    }

    if (member) {
      // Shared exit point: returns under the class tweak when entered
      // indirectly, under the body tweak otherwise.
      b.bind_label(".exit");
      if (save_flag) {
        b.emit({isa::Op::kLw, kFlagReg, 2, 0, 0, 0}, body, true);
        // Scrub the spill slot: the saved flag must not leak into the final
        // memory state, which is compared against the unprotected build.
        b.emit({isa::Op::kSw, 0, 2, 0, 0, 0}, body, true);
        b.emit({isa::Op::kAddi, 2, 2, 0, 4, 0}, body, true);
        out.accounting.flag_save_instrs += 3;
      }
      b.emit({isa::Op::kBeq, 0, kFlagReg, 0, 0, 0}, body, true, Ref::kLabel,
             ".ret_direct");
      ++out.accounting.epilogue_instrs;
      b.emit({isa::Op::kAddi, kFlagReg, 0, 0, 0, 0}, body, true);
      ++out.accounting.epilogue_instrs;
      b.emit_tweak_switch(entry_tw, body, &out.accounting.epilogue_instrs);
      b.emit({isa::Op::kJalr, 0, 1, 0, 0, 0}, entry_tw, true);
      ++out.accounting.epilogue_instrs;
      b.align();
      b.bind_label(".ret_direct");
      b.emit({isa::Op::kJalr, 0, 1, 0, 0, 0}, body, true);
      ++out.accounting.epilogue_instrs;
    }

    b.finish(body);

    // A fresh block must begin wherever the domain changes.
    for (size_t i = 1; i < fn.code.size(); i += 2)
      if (fn.code[i].domain != fn.code[i - 1].domain)
        throw InstrumentError("internal: tweak domain split across a granule");
  }
  return out;
}

// Symbol lowering without any CFI additions; the unprotected baseline.
inline InstrumentedProgram lower(const asmparse::SourceProgram &p) {
  using namespace detail;
  InstrumentedProgram out;
  out.entry = p.entry;
  for (const auto &src : p.functions) {
    out.functions.push_back({src.name, {}, {}, 0});
    InstrFunction &fn = out.functions.back();
    FunctionBuilder b(fn, out.accounting, 5);
    std::map<size_t, std::vector<std::string>> labels_at;
    for (const auto &[name, idx] : src.labels) labels_at[idx].push_back(name);
    for (size_t i = 0; i < src.instrs.size(); ++i) {
      const auto &si = src.instrs[i];
      if (auto it = labels_at.find(i); it != labels_at.end())
        for (const auto &name : it->second) fn.labels[name] = b.pos();
      b.emit(si.ins, 0, false, from_asm_ref(si.ref), si.sym);
    }
    b.finish(0);
    out.tweaks.body_tweak[src.name] = 0;
  }
  return out;
}

// Places functions contiguously at 8-byte-aligned starts. `limit`, when
// nonzero, is the first byte address past the usable flash range.
inline LayoutResult layout(const InstrumentedProgram &ip, uint64_t base,
                           uint64_t limit = 0) {
  if (base & 7)
    throw InstrumentError("layout base must be 8-byte aligned");

  LayoutResult out;
  uint64_t addr = base;
  for (const auto &fn : ip.functions) {
    out.start[fn.name] = addr;
    addr += 4 * fn.code.size();
  }
  if (limit && addr > limit)
    throw InstrumentError("layout overflows the flash range");

  const auto resolve = [&](const InstrFunction &fn, size_t idx,
                           const TaggedInstr &ti) -> isa::Instruction {
    isa::Instruction ins = ti.ins;
    uint64_t pc = out.start.at(fn.name) + 4 * idx;
    switch (ti.ref) {
      case Ref::kNone:
        break;
      case Ref::kLabel: {
        auto it = fn.labels.find(ti.sym);
        if (it == fn.labels.end())
          throw InstrumentError("unresolved label '" + ti.sym + "'");
        ins.imm = int32_t(4 * int64_t(it->second) - 4 * int64_t(idx));
        break;
      }
      case Ref::kFuncStart:
        ins.imm = int32_t(int64_t(out.start.at(ti.sym)) - int64_t(pc));
        break;
      case Ref::kFuncBody: {
        const InstrFunction *callee = ip.find(ti.sym);
        uint64_t target = out.start.at(ti.sym) + 4 * callee->direct_entry;
        ins.imm = int32_t(int64_t(target) - int64_t(pc));
        break;
      }
      case Ref::kFuncHi: {
        uint64_t a = out.start.at(ti.sym);
        ins.imm = int32_t(((uint32_t(a) + 0x800u) >> 12) & 0xfffff);
        break;
      }
      case Ref::kFuncLo: {
        uint64_t a = out.start.at(ti.sym);
        ins.imm = int32_t(uint32_t(a) << 20) >> 20;
        break;
      }
    }
    return ins;
  };

  out.metadata.width = ip.tweaks.width;
  for (const auto &fn : ip.functions) {
    uint64_t start = out.start.at(fn.name);
    meta::MetadataFile::Func mf{fn.name, start, {}};
    for (size_t i = 0; i < fn.code.size(); i += 2) {
      isa::Instruction lo = resolve(fn, i, fn.code[i]);
      isa::Instruction hi = resolve(fn, i + 1, fn.code[i + 1]);
      uint64_t word = uint64_t(isa::encode(lo).value) |
                      (uint64_t(isa::encode(hi).value) << 32);
      out.image[start + 4 * i] = word;
      mf.blocks.emplace_back(4 * i, fn.code[i].domain);
    }
    out.metadata.funcs.push_back(std::move(mf));
  }

  const InstrFunction *entry_fn = ip.find(ip.entry);
  if (!entry_fn) throw InstrumentError("entry function '" + ip.entry + "' not found");
  out.entry_addr = out.start.at(ip.entry) + 4 * entry_fn->direct_entry;
  out.entry_tweak = ip.tweaks.body_tweak.at(ip.entry);
  out.metadata.entry_addr = out.entry_addr;
  out.metadata.entry_tweak = out.entry_tweak;
  return out;
}

}  // namespace scfi::instrument

#endif  // SCFI_INSTRUMENT_HPP_
