// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_SIM_HPP_
#define SCFI_SIM_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "scfi/isa.hpp"
#include "scfi/prince.hpp"
#include "scfi/scramble.hpp"

namespace scfi::sim {

inline constexpr uint64_t kDmemBase = 0x80000000ull;
inline constexpr uint64_t kDmemSize = 64 * 1024;
// Conventional initial stack pointer: top of data RAM.
inline constexpr uint32_t kStackTop = uint32_t(kDmemBase + kDmemSize);

enum class Termination { kEcallExit, kIllegalTrap, kFetchFault, kMemFault, kCycleLimit };

inline const char *to_string(Termination t) {
  switch (t) {
    case Termination::kEcallExit: return "ecall-exit";
    case Termination::kIllegalTrap: return "illegal-instruction";
    case Termination::kFetchFault: return "fetch-fault";
    case Termination::kMemFault: return "memory-fault";
    case Termination::kCycleLimit: return "cycle-limit";
  }
  return "?";
}

struct TraceEntry {
  uint32_t pc;
  uint32_t tweak;
  uint32_t word;
  const char *mnemonic;
};

struct RunResult {
  Termination termination = Termination::kCycleLimit;
  uint32_t exit_value = 0;
  uint64_t cycles = 0;
  std::vector<TraceEntry> trace;
};

struct MachineState {
  uint32_t pc = 0;
  std::array<uint32_t, 32> gpr{};  // x0 hardwired to zero on read/write
  uint32_t csr_tweak = 0;
  uint32_t csr_range_lo = 0;
  uint32_t csr_range_hi = 0;
  uint64_t mcycle = 0;
  std::map<uint64_t, uint64_t> icache;  // granule addr -> decrypted block
  std::vector<uint8_t> dmem = std::vector<uint8_t>(kDmemSize, 0);
  bool halted = false;
};

enum class StepEvent { kRetired, kEcallExit, kIllegalTrap, kFetchFault, kMemFault };

// One-shot perturbations used by the fault-injection harness.
struct BusFlip {
  uint32_t xor_mask = 0;  // applied to the fetched 32-bit word (surface AB)
};
enum class InstrField { kRd, kRs1, kRs2, kImm };
struct DecodeFlip {
  InstrField field;
  uint32_t xor_mask = 0;  // applied to the decoded field (surface AC)
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// In-order 1-instruction-per-cycle RV32I core with a descrambling fetch path:
// instruction granules are decrypted with effective_key(key, csr_tweak, addr)
// and cached; any write to the tweak CSR flushes the cache.
class Simulator {
 public:
  Simulator(scramble::FlashImage flash, bool scrambled, uint64_t entry,
            uint32_t initial_tweak)
      : flash_(std::move(flash)), scrambled_(scrambled) {
    if (entry & 3) throw SimError("entry address must be 4-byte aligned");
    if (!flash_.word_map.count(entry & ~7ull))
      throw SimError("entry address outside flash image");
    state_.pc = uint32_t(entry);
    state_.csr_tweak = initial_tweak & 0xfffff;
    state_.csr_range_lo = uint32_t(flash_.params.range_lo);
    state_.csr_range_hi = uint32_t(flash_.params.range_hi);
  }

  MachineState &state() { return state_; }
  const MachineState &state() const { return state_; }
  scramble::FlashImage &flash() { return flash_; }

  void arm_bus_flip(BusFlip f) { bus_flip_ = f; }
  void arm_decode_flip(DecodeFlip f) { decode_flip_ = f; }

  uint32_t last_word() const { return last_word_; }
  const isa::Instruction &last_ins() const { return last_ins_; }
  bool scrambled() const { return scrambled_; }

  StepEvent step() {
    MachineState &s = state_;
    if (s.halted) throw SimError("step on halted machine");

    if (s.pc & 3) return StepEvent::kFetchFault;
    uint64_t granule = s.pc & ~7u;
    auto ic = s.icache.find(granule);
    uint64_t block;
    if (ic != s.icache.end()) {
      block = ic->second;
    } else {
      auto fw = flash_.word_map.find(granule);
      if (fw == flash_.word_map.end()) return StepEvent::kFetchFault;
      block = fw->second;
      if (scrambled_) {
        prince::ScrambleParams p = flash_.params;
        p.range_lo = s.csr_range_lo & ~7u;
        p.range_hi = s.csr_range_hi & ~7u;
        auto key = prince::effective_key(p.key, s.csr_tweak, granule, p);
        block = prince::decrypt(block, key, p.rounds);
      }
      s.icache.emplace(granule, block);
    }
    uint32_t word = (s.pc & 4) ? uint32_t(block >> 32) : uint32_t(block);
    if (bus_flip_) {
      word ^= bus_flip_->xor_mask;
      bus_flip_.reset();
    }
    last_word_ = word;

    auto dec = isa::decode({word});
    if (!dec) return StepEvent::kIllegalTrap;
    isa::Instruction ins = *dec;
    if (decode_flip_) {
      switch (decode_flip_->field) {
        case InstrField::kRd: ins.rd = (ins.rd ^ decode_flip_->xor_mask) & 31; break;
        case InstrField::kRs1: ins.rs1 = (ins.rs1 ^ decode_flip_->xor_mask) & 31; break;
        case InstrField::kRs2: ins.rs2 = (ins.rs2 ^ decode_flip_->xor_mask) & 31; break;
        case InstrField::kImm: ins.imm = int32_t(uint32_t(ins.imm) ^ decode_flip_->xor_mask); break;
      }
      decode_flip_.reset();
    }
    last_ins_ = ins;

    return execute(ins);
  }

  RunResult run(uint64_t max_cycles, bool trace = false) {
    if (max_cycles < 1) throw SimError("max_cycles must be >= 1");
    RunResult r;
    while (state_.mcycle < max_cycles) {
      uint32_t pc = state_.pc;
      uint32_t tweak_at_fetch = state_.csr_tweak;
      StepEvent e = step();
      if (trace) {
        const char *mn = e == StepEvent::kFetchFault ? "<fetch>"
                         : e == StepEvent::kIllegalTrap
                             ? "<illegal>"
                             : isa::mnemonic(last_ins_.op);
        r.trace.push_back({pc, tweak_at_fetch, last_word_, mn});
      }
      if (finishes(e, r)) return r;
    }
    r.termination = Termination::kCycleLimit;
    r.cycles = state_.mcycle;
    return r;
  }

 private:
  bool finishes(StepEvent e, RunResult &r) {
    switch (e) {
      case StepEvent::kRetired:
        return false;
      case StepEvent::kEcallExit:
        r.termination = Termination::kEcallExit;
        break;
      case StepEvent::kIllegalTrap:
        r.termination = Termination::kIllegalTrap;
        break;
      case StepEvent::kFetchFault:
        r.termination = Termination::kFetchFault;
        break;
      case StepEvent::kMemFault:
        r.termination = Termination::kMemFault;
        break;
    }
    state_.halted = true;
    r.exit_value = state_.gpr[10];
    r.cycles = state_.mcycle;
    return true;
  }

  uint32_t read_gpr(uint8_t r) const { return r == 0 ? 0 : state_.gpr[r]; }
  void write_gpr(uint8_t r, uint32_t v) {
    if (r != 0) state_.gpr[r] = v;
  }

  StepEvent execute(const isa::Instruction &ins) {
    using isa::Op;
    MachineState &s = state_;
    uint32_t next_pc = s.pc + 4;
    switch (ins.op) {
      case Op::kAdd: write_gpr(ins.rd, read_gpr(ins.rs1) + read_gpr(ins.rs2)); break;
      case Op::kSub: write_gpr(ins.rd, read_gpr(ins.rs1) - read_gpr(ins.rs2)); break;
      case Op::kAnd: write_gpr(ins.rd, read_gpr(ins.rs1) & read_gpr(ins.rs2)); break;
      case Op::kOr:  write_gpr(ins.rd, read_gpr(ins.rs1) | read_gpr(ins.rs2)); break;
      case Op::kXor: write_gpr(ins.rd, read_gpr(ins.rs1) ^ read_gpr(ins.rs2)); break;
      case Op::kSlt:
        write_gpr(ins.rd, int32_t(read_gpr(ins.rs1)) < int32_t(read_gpr(ins.rs2)) ? 1 : 0);
        break;
      case Op::kSll: write_gpr(ins.rd, read_gpr(ins.rs1) << (read_gpr(ins.rs2) & 31)); break;
      case Op::kSrl: write_gpr(ins.rd, read_gpr(ins.rs1) >> (read_gpr(ins.rs2) & 31)); break;
      case Op::kAddi: write_gpr(ins.rd, read_gpr(ins.rs1) + uint32_t(ins.imm)); break;
      case Op::kLui: write_gpr(ins.rd, uint32_t(ins.imm) << 12); break;
      case Op::kAuipc: write_gpr(ins.rd, s.pc + (uint32_t(ins.imm) << 12)); break;
      case Op::kLw: {
        uint64_t addr = read_gpr(ins.rs1) + uint32_t(ins.imm);
        if (addr & 3) return StepEvent::kMemFault;
        if (addr < kDmemBase || addr + 4 > kDmemBase + kDmemSize)
          return StepEvent::kMemFault;
        uint64_t off = addr - kDmemBase;
        uint32_t v = uint32_t(s.dmem[off]) | uint32_t(s.dmem[off + 1]) << 8 |
                     uint32_t(s.dmem[off + 2]) << 16 | uint32_t(s.dmem[off + 3]) << 24;
        write_gpr(ins.rd, v);
        break;
      }
      case Op::kSw: {
        uint64_t addr = read_gpr(ins.rs1) + uint32_t(ins.imm);
        if (addr & 3) return StepEvent::kMemFault;
        if (addr < kDmemBase || addr + 4 > kDmemBase + kDmemSize)
          return StepEvent::kMemFault;
        uint64_t off = addr - kDmemBase;
        uint32_t v = read_gpr(ins.rs2);
        s.dmem[off] = uint8_t(v);
        s.dmem[off + 1] = uint8_t(v >> 8);
        s.dmem[off + 2] = uint8_t(v >> 16);
        s.dmem[off + 3] = uint8_t(v >> 24);
        break;
      }
      case Op::kJal:
        write_gpr(ins.rd, s.pc + 4);
        next_pc = s.pc + uint32_t(ins.imm);
        break;
      case Op::kJalr: {
        uint32_t t = s.pc + 4;
        next_pc = (read_gpr(ins.rs1) + uint32_t(ins.imm)) & ~1u;
        write_gpr(ins.rd, t);
        break;
      }
      case Op::kBeq:
        if (read_gpr(ins.rs1) == read_gpr(ins.rs2)) next_pc = s.pc + uint32_t(ins.imm);
        break;
      case Op::kBne:
        if (read_gpr(ins.rs1) != read_gpr(ins.rs2)) next_pc = s.pc + uint32_t(ins.imm);
        break;
      case Op::kBlt:
        if (int32_t(read_gpr(ins.rs1)) < int32_t(read_gpr(ins.rs2)))
          next_pc = s.pc + uint32_t(ins.imm);
        break;
      case Op::kBge:
        if (int32_t(read_gpr(ins.rs1)) >= int32_t(read_gpr(ins.rs2)))
          next_pc = s.pc + uint32_t(ins.imm);
        break;
      case Op::kEcall:
        s.mcycle += 1;
        return StepEvent::kEcallExit;
      case Op::kCsrrw:
      case Op::kCsrrwi: {
        uint32_t wval = ins.op == Op::kCsrrw ? read_gpr(ins.rs1) : uint32_t(ins.imm);
        uint32_t old;
        switch (ins.csr) {
          case isa::kCsrTweak:
            old = s.csr_tweak;
            s.csr_tweak = wval & 0xfffff;
            s.icache.clear();  // flush on tweak change
            break;
          case isa::kCsrRangeLo:
            old = s.csr_range_lo;
            s.csr_range_lo = wval;
            break;
          case isa::kCsrRangeHi:
            old = s.csr_range_hi;
            s.csr_range_hi = wval;
            break;
          case isa::kCsrMcycle:
            old = uint32_t(s.mcycle);  // writes to the counter are ignored
            break;
          default:
            return StepEvent::kIllegalTrap;
        }
        write_gpr(ins.rd, old);
        break;
      }
    }
    s.pc = next_pc;
    s.mcycle += 1;
    return StepEvent::kRetired;
  }

  scramble::FlashImage flash_;
  bool scrambled_;
  MachineState state_;
  std::optional<BusFlip> bus_flip_;
  std::optional<DecodeFlip> decode_flip_;
  uint32_t last_word_ = 0;
  isa::Instruction last_ins_{isa::nop()};
};

}  // namespace scfi::sim

#endif  // SCFI_SIM_HPP_
