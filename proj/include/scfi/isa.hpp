// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_ISA_HPP_
#define SCFI_ISA_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "scfi/rng.hpp"

namespace scfi::isa {

// Custom CSRs sit in the machine-mode custom read/write space; mcycle is the
// standard counter.
inline constexpr uint16_t kCsrTweak = 0x7c0;
inline constexpr uint16_t kCsrRangeLo = 0x7c1;
inline constexpr uint16_t kCsrRangeHi = 0x7c2;
inline constexpr uint16_t kCsrMcycle = 0xb00;

inline constexpr bool is_supported_csr(uint16_t csr) {
  return csr == kCsrTweak || csr == kCsrRangeLo || csr == kCsrRangeHi ||
         csr == kCsrMcycle;
}

enum class Op : uint8_t {
  kAdd, kAddi, kSub, kAnd, kOr, kXor, kSlt, kSll, kSrl,
  kLui, kAuipc,
  kLw, kSw,
  kJal, kJalr, kBeq, kBne, kBlt, kBge,
  kEcall, kCsrrw, kCsrrwi,
};

struct Instruction {
  Op op;
  uint8_t rd = 0;
  uint8_t rs1 = 0;
  uint8_t rs2 = 0;
  int32_t imm = 0;     // sign-extended; U-type keeps the raw 20-bit field
  uint16_t csr = 0;

  friend bool operator==(const Instruction &, const Instruction &) = default;
};

inline constexpr Instruction nop() { return Instruction{Op::kAddi, 0, 0, 0, 0, 0}; }

struct Word32 {
  uint32_t value = 0;
};

inline const char *mnemonic(Op op) {
  switch (op) {
    case Op::kAdd: return "add";
    case Op::kAddi: return "addi";
    case Op::kSub: return "sub";
    case Op::kAnd: return "and";
    case Op::kOr: return "or";
    case Op::kXor: return "xor";
    case Op::kSlt: return "slt";
    case Op::kSll: return "sll";
    case Op::kSrl: return "srl";
    case Op::kLui: return "lui";
    case Op::kAuipc: return "auipc";
    case Op::kLw: return "lw";
    case Op::kSw: return "sw";
    case Op::kJal: return "jal";
    case Op::kJalr: return "jalr";
    case Op::kBeq: return "beq";
    case Op::kBne: return "bne";
    case Op::kBlt: return "blt";
    case Op::kBge: return "bge";
    case Op::kEcall: return "ecall";
    case Op::kCsrrw: return "csrrw";
    case Op::kCsrrwi: return "csrrwi";
  }
  return "?";
}

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_reg(uint8_t r, const char *what) {
  if (r > 31) throw EncodeError(std::string(what) + " register out of range");
}

inline void check_imm(int32_t imm, int32_t lo, int32_t hi, const char *what) {
  if (imm < lo || imm > hi)
    throw EncodeError(std::string(what) + " immediate out of range");
}

inline uint32_t r_type(uint32_t f7, uint8_t rs2, uint8_t rs1, uint32_t f3,
                       uint8_t rd, uint32_t opc) {
  return (f7 << 25) | (uint32_t(rs2) << 20) | (uint32_t(rs1) << 15) |
         (f3 << 12) | (uint32_t(rd) << 7) | opc;
}

inline uint32_t i_type(int32_t imm, uint8_t rs1, uint32_t f3, uint8_t rd,
                       uint32_t opc) {
  return (uint32_t(imm & 0xfff) << 20) | (uint32_t(rs1) << 15) | (f3 << 12) |
         (uint32_t(rd) << 7) | opc;
}

inline int32_t sext(uint32_t v, int bits) {
  uint32_t m = 1u << (bits - 1);
  return static_cast<int32_t>((v ^ m) - m);
}

}  // namespace detail

inline Word32 encode(const Instruction &ins) {
  using namespace detail;
  check_reg(ins.rd, "rd");
  check_reg(ins.rs1, "rs1");
  check_reg(ins.rs2, "rs2");
  switch (ins.op) {
    case Op::kAdd:  return {r_type(0x00, ins.rs2, ins.rs1, 0, ins.rd, 0x33)};
    case Op::kSub:  return {r_type(0x20, ins.rs2, ins.rs1, 0, ins.rd, 0x33)};
    case Op::kSll:  return {r_type(0x00, ins.rs2, ins.rs1, 1, ins.rd, 0x33)};
    case Op::kSlt:  return {r_type(0x00, ins.rs2, ins.rs1, 2, ins.rd, 0x33)};
    case Op::kXor:  return {r_type(0x00, ins.rs2, ins.rs1, 4, ins.rd, 0x33)};
    case Op::kSrl:  return {r_type(0x00, ins.rs2, ins.rs1, 5, ins.rd, 0x33)};
    case Op::kOr:   return {r_type(0x00, ins.rs2, ins.rs1, 6, ins.rd, 0x33)};
    case Op::kAnd:  return {r_type(0x00, ins.rs2, ins.rs1, 7, ins.rd, 0x33)};
    case Op::kAddi:
      check_imm(ins.imm, -2048, 2047, "addi");
      return {i_type(ins.imm, ins.rs1, 0, ins.rd, 0x13)};
    case Op::kLw:
      check_imm(ins.imm, -2048, 2047, "lw");
      return {i_type(ins.imm, ins.rs1, 2, ins.rd, 0x03)};
    case Op::kSw: {
      check_imm(ins.imm, -2048, 2047, "sw");
      uint32_t imm = uint32_t(ins.imm & 0xfff);
      return {((imm >> 5) << 25) | (uint32_t(ins.rs2) << 20) |
              (uint32_t(ins.rs1) << 15) | (2u << 12) | ((imm & 0x1f) << 7) |
              0x23};
    }
    case Op::kLui:
    case Op::kAuipc:
      check_imm(ins.imm, 0, 0xfffff, "u-type");
      return {(uint32_t(ins.imm) << 12) | (uint32_t(ins.rd) << 7) |
              (ins.op == Op::kLui ? 0x37u : 0x17u)};
    case Op::kJal: {
      check_imm(ins.imm, -(1 << 20), (1 << 20) - 2, "jal");
      if (ins.imm & 1) throw EncodeError("jal immediate must be even");
      uint32_t imm = uint32_t(ins.imm);
      uint32_t w = ((imm >> 20) & 1) << 31 | ((imm >> 1) & 0x3ff) << 21 |
                   ((imm >> 11) & 1) << 20 | ((imm >> 12) & 0xff) << 12;
      return {w | (uint32_t(ins.rd) << 7) | 0x6f};
    }
    case Op::kJalr:
      check_imm(ins.imm, -2048, 2047, "jalr");
      return {i_type(ins.imm, ins.rs1, 0, ins.rd, 0x67)};
    case Op::kBeq:
    case Op::kBne:
    case Op::kBlt:
    case Op::kBge: {
      check_imm(ins.imm, -4096, 4094, "branch");
      if (ins.imm & 1) throw EncodeError("branch immediate must be even");
      uint32_t f3 = ins.op == Op::kBeq   ? 0
                    : ins.op == Op::kBne ? 1
                    : ins.op == Op::kBlt ? 4
                                         : 5;
      uint32_t imm = uint32_t(ins.imm);
      uint32_t w = ((imm >> 12) & 1) << 31 | ((imm >> 5) & 0x3f) << 25 |
                   ((imm >> 1) & 0xf) << 8 | ((imm >> 11) & 1) << 7;
      return {w | (uint32_t(ins.rs2) << 20) | (uint32_t(ins.rs1) << 15) |
              (f3 << 12) | 0x63};
    }
    case Op::kEcall:
      return {0x00000073u};
    case Op::kCsrrw:
      if (!is_supported_csr(ins.csr)) throw EncodeError("unsupported csr");
      return {(uint32_t(ins.csr) << 20) | (uint32_t(ins.rs1) << 15) |
              (1u << 12) | (uint32_t(ins.rd) << 7) | 0x73};
    case Op::kCsrrwi:
      if (!is_supported_csr(ins.csr)) throw EncodeError("unsupported csr");
      check_imm(ins.imm, 0, 31, "csrrwi");
      return {(uint32_t(ins.csr) << 20) | (uint32_t(ins.imm) << 15) |
              (5u << 12) | (uint32_t(ins.rd) << 7) | 0x73};
  }
  throw EncodeError("unsupported instruction");
}

// Total decoder. Returns nullopt exactly when the word is not a valid
// encoding of a supported instruction; garbled fetches rely on this check.
inline std::optional<Instruction> decode(Word32 w) {
  using detail::sext;
  const uint32_t v = w.value;
  const uint32_t opc = v & 0x7f;
  const uint8_t rd = (v >> 7) & 0x1f;
  const uint32_t f3 = (v >> 12) & 7;
  const uint8_t rs1 = (v >> 15) & 0x1f;
  const uint8_t rs2 = (v >> 20) & 0x1f;
  const uint32_t f7 = v >> 25;
  switch (opc) {
    case 0x33: {
      Op op;
      if (f7 == 0x00) {
        switch (f3) {
          case 0: op = Op::kAdd; break;
          case 1: op = Op::kSll; break;
          case 2: op = Op::kSlt; break;
          case 4: op = Op::kXor; break;
          case 5: op = Op::kSrl; break;
          case 6: op = Op::kOr; break;
          case 7: op = Op::kAnd; break;
          default: return std::nullopt;
        }
      } else if (f7 == 0x20 && f3 == 0) {
        op = Op::kSub;
      } else {
        return std::nullopt;
      }
      return Instruction{op, rd, rs1, rs2, 0, 0};
    }
    case 0x13:
      if (f3 != 0) return std::nullopt;
      return Instruction{Op::kAddi, rd, rs1, 0, sext(v >> 20, 12), 0};
    case 0x03:
      if (f3 != 2) return std::nullopt;
      return Instruction{Op::kLw, rd, rs1, 0, sext(v >> 20, 12), 0};
    case 0x23: {
      if (f3 != 2) return std::nullopt;
      uint32_t imm = (f7 << 5) | rd;
      return Instruction{Op::kSw, 0, rs1, rs2, sext(imm, 12), 0};
    }
    case 0x37:
      return Instruction{Op::kLui, rd, 0, 0, int32_t(v >> 12), 0};
    case 0x17:
      return Instruction{Op::kAuipc, rd, 0, 0, int32_t(v >> 12), 0};
    case 0x6f: {
      uint32_t imm = ((v >> 31) & 1) << 20 | ((v >> 21) & 0x3ff) << 1 |
                     ((v >> 20) & 1) << 11 | ((v >> 12) & 0xff) << 12;
      return Instruction{Op::kJal, rd, 0, 0, sext(imm, 21), 0};
    }
    case 0x67:
      if (f3 != 0) return std::nullopt;
      return Instruction{Op::kJalr, rd, rs1, 0, sext(v >> 20, 12), 0};
    case 0x63: {
      Op op;
      switch (f3) {
        case 0: op = Op::kBeq; break;
        case 1: op = Op::kBne; break;
        case 4: op = Op::kBlt; break;
        case 5: op = Op::kBge; break;
        default: return std::nullopt;
      }
      uint32_t imm = ((v >> 31) & 1) << 12 | ((v >> 7) & 1) << 11 |
                     ((v >> 25) & 0x3f) << 5 | ((v >> 8) & 0xf) << 1;
      return Instruction{op, 0, rs1, rs2, sext(imm, 13), 0};
    }
    case 0x73: {
      if (v == 0x00000073u) return Instruction{Op::kEcall, 0, 0, 0, 0, 0};
      uint16_t csr = uint16_t(v >> 20);
      if (!is_supported_csr(csr)) return std::nullopt;
      if (f3 == 1) return Instruction{Op::kCsrrw, rd, rs1, 0, 0, csr};
      if (f3 == 5)
        return Instruction{Op::kCsrrwi, rd, 0, 0, int32_t(rs1), csr};
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

// Fraction of uniformly random 32-bit words that fail to decode. This drives
// the detection-rate prediction for wrong-tweak fetches.
inline double illegal_density(uint64_t sample_count, uint64_t seed) {
  if (sample_count < 1000)
    throw std::invalid_argument("illegal_density: sample_count < 1000");
  SplitMix64 rng(seed);
  uint64_t illegal = 0;
  for (uint64_t i = 0; i < sample_count; ++i) {
    if (!decode({rng.next_u32()})) ++illegal;
  }
  return double(illegal) / double(sample_count);
}

}  // namespace scfi::isa

#endif  // SCFI_ISA_HPP_
