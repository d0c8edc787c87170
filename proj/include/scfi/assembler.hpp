// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_ASSEMBLER_HPP_
#define SCFI_ASSEMBLER_HPP_

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scfi/isa.hpp"

namespace scfi::asmparse {

// How an instruction operand refers to a symbol that only becomes a concrete
// number at layout time.
enum class RefKind : uint8_t {
  kNone,
  kLabel,    // branch / jal to a label in the same function
  kFunc,     // jal to a function (direct call)
  kFuncHi,   // %hi of a function address (la expansion)
  kFuncLo,   // %lo of a function address (la expansion)
};

struct SourceInstr {
  isa::Instruction ins;
  RefKind ref = RefKind::kNone;
  std::string sym;
  std::vector<std::string> targets;  // indirect-call target annotation
  bool is_return = false;            // jalr x0, 0(x1)
  int line = 0;
};

struct Function {
  std::string name;
  std::vector<SourceInstr> instrs;
  std::map<std::string, size_t> labels;  // label -> instruction index
  int line = 0;
};

struct SourceProgram {
  std::vector<Function> functions;
  std::string entry;

  const Function *find(const std::string &name) const {
    for (const auto &f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
};

struct Diagnostic {
  int line;
  std::string message;
};

struct AssembleResult {
  std::optional<SourceProgram> program;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return program.has_value(); }
};

class AssembleError : public std::runtime_error {
 public:
  explicit AssembleError(std::vector<Diagnostic> diags)
      : std::runtime_error(format(diags)), diagnostics(std::move(diags)) {}
  std::vector<Diagnostic> diagnostics;

 private:
  static std::string format(const std::vector<Diagnostic> &diags) {
    std::ostringstream os;
    for (const auto &d : diags) os << "line " << d.line << ": " << d.message << "\n";
    return os.str();
  }
};

namespace detail {

inline std::optional<uint8_t> parse_reg(const std::string &tok) {
  static const std::map<std::string, uint8_t> kAbi = {
      {"zero", 0}, {"ra", 1},  {"sp", 2},  {"gp", 3},  {"tp", 4},
      {"t0", 5},   {"t1", 6},  {"t2", 7},  {"s0", 8},  {"fp", 8},
      {"s1", 9},   {"a0", 10}, {"a1", 11}, {"a2", 12}, {"a3", 13},
      {"a4", 14},  {"a5", 15}, {"a6", 16}, {"a7", 17}, {"s2", 18},
      {"s3", 19},  {"s4", 20}, {"s5", 21}, {"s6", 22}, {"s7", 23},
      {"s8", 24},  {"s9", 25}, {"s10", 26}, {"s11", 27}, {"t3", 28},
      {"t4", 29},  {"t5", 30}, {"t6", 31}};
  if (tok.size() >= 2 && tok[0] == 'x') {
    int n = 0;
    for (size_t i = 1; i < tok.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return std::nullopt;
      n = n * 10 + (tok[i] - '0');
    }
    if (n <= 31) return uint8_t(n);
    return std::nullopt;
  }
  auto it = kAbi.find(tok);
  if (it != kAbi.end()) return it->second;
  return std::nullopt;
}

inline std::optional<int64_t> parse_imm(const std::string &tok) {
  if (tok.empty()) return std::nullopt;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(tok, &pos, 0);
    if (pos != tok.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

inline std::optional<uint16_t> parse_csr(const std::string &tok) {
  if (tok == "csr_tweak") return isa::kCsrTweak;
  if (tok == "csr_range_lo") return isa::kCsrRangeLo;
  if (tok == "csr_range_hi") return isa::kCsrRangeHi;
  if (tok == "mcycle") return isa::kCsrMcycle;
  if (auto v = parse_imm(tok); v && *v >= 0 && *v <= 0xfff) return uint16_t(*v);
  return std::nullopt;
}

inline std::string strip(const std::string &s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Split "addi x1, x0, 5" into mnemonic + comma-separated operands;
// "imm(reg)" stays one token.
inline std::vector<std::string> split_operands(const std::string &s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!strip(cur).empty()) out.push_back(strip(cur));
  return out;
}

inline bool valid_name(const std::string &s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

}  // namespace detail

// Parses the mini-assembly grammar documented in docs/asm.md. On failure the
// result carries line-numbered diagnostics instead of a program.
inline AssembleResult assemble(const std::string &text) {
  using namespace detail;
  AssembleResult res;
  SourceProgram prog;
  std::vector<Diagnostic> &diags = res.diagnostics;

  Function *cur = nullptr;
  std::vector<std::string> pending_targets;
  bool pending_entry = false;
  int targets_line = 0;
  std::set<std::string> func_names;
  std::vector<std::string> pending_labels;

  auto err = [&](int line, const std::string &m) { diags.push_back({line, m}); };

  auto emit = [&](int line, SourceInstr si) {
    si.line = line;
    if (si.ins.rd == 31 || si.ins.rs1 == 31 ||
        (si.ins.op != isa::Op::kCsrrwi && si.ins.rs2 == 31)) {
      err(line, "register x31 is reserved for instrumentation");
      return;
    }
    for (const auto &lbl : pending_labels) cur->labels[lbl] = cur->instrs.size();
    pending_labels.clear();
    cur->instrs.push_back(std::move(si));
  };

  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    if (auto p = raw.find(';'); p != std::string::npos) raw = raw.substr(0, p);
    std::string line = strip(raw);
    if (line.empty()) continue;

    if (line[0] == '#') {
      std::string ann = strip(line.substr(1));
      if (ann == "entry") {
        pending_entry = true;
      } else if (ann.rfind("targets:", 0) == 0) {
        pending_targets.clear();
        for (auto &t : split_operands(ann.substr(8))) {
          if (!valid_name(t)) {
            err(lineno, "malformed target name '" + t + "'");
          } else {
            pending_targets.push_back(t);
          }
        }
        if (pending_targets.empty()) err(lineno, "empty target set");
        targets_line = lineno;
      } else {
        err(lineno, "unknown annotation '" + line + "'");
      }
      continue;
    }

    if (line.rfind("func ", 0) == 0 && line.back() == ':') {
      std::string name = strip(line.substr(5, line.size() - 6));
      if (!valid_name(name)) {
        err(lineno, "malformed function name '" + name + "'");
        continue;
      }
      if (!pending_labels.empty()) {
        err(lineno, "label without instruction at end of previous function");
        pending_labels.clear();
      }
      if (!func_names.insert(name).second)
        err(lineno, "duplicate function name '" + name + "'");
      prog.functions.push_back(Function{name, {}, {}, lineno});
      cur = &prog.functions.back();
      if (pending_entry) {
        if (!prog.entry.empty()) err(lineno, "multiple entry functions");
        prog.entry = name;
        pending_entry = false;
      }
      if (!pending_targets.empty()) {
        err(targets_line, "targets annotation must precede an indirect call");
        pending_targets.clear();
      }
      continue;
    }

    if (line.back() == ':') {
      std::string name = strip(line.substr(0, line.size() - 1));
      if (!cur) {
        err(lineno, "label outside of any function");
        continue;
      }
      if (!valid_name(name)) {
        err(lineno, "malformed label '" + name + "'");
        continue;
      }
      if (cur->labels.count(name)) {
        err(lineno, "duplicate label '" + name + "'");
        continue;
      }
      pending_labels.push_back(name);
      continue;
    }

    if (!cur) {
      err(lineno, "instruction outside of any function");
      continue;
    }

    size_t sp = line.find_first_of(" \t");
    std::string mn = sp == std::string::npos ? line : line.substr(0, sp);
    std::vector<std::string> ops =
        sp == std::string::npos ? std::vector<std::string>{}
                                : split_operands(line.substr(sp + 1));

    bool had_targets = !pending_targets.empty();
    auto take_targets = [&]() {
      auto t = std::move(pending_targets);
      pending_targets.clear();
      return t;
    };

    auto need = [&](size_t n) {
      if (ops.size() != n) {
        err(lineno, mn + " expects " + std::to_string(n) + " operands");
        return false;
      }
      return true;
    };
    auto reg = [&](size_t i) -> std::optional<uint8_t> {
      auto r = parse_reg(ops[i]);
      if (!r) err(lineno, "bad register '" + ops[i] + "'");
      return r;
    };
    auto imm = [&](size_t i) -> std::optional<int64_t> {
      auto v = parse_imm(ops[i]);
      if (!v) err(lineno, "bad immediate '" + ops[i] + "'");
      return v;
    };
    // "imm(reg)" memory operand
    auto memop = [&](size_t i) -> std::optional<std::pair<int64_t, uint8_t>> {
      auto l = ops[i].find('(');
      auto r = ops[i].rfind(')');
      if (l == std::string::npos || r == std::string::npos || r < l) {
        err(lineno, "bad memory operand '" + ops[i] + "'");
        return std::nullopt;
      }
      auto off = parse_imm(strip(ops[i].substr(0, l)));
      auto base = parse_reg(strip(ops[i].substr(l + 1, r - l - 1)));
      if (!off || !base) {
        err(lineno, "bad memory operand '" + ops[i] + "'");
        return std::nullopt;
      }
      return std::make_pair(*off, *base);
    };

    using isa::Op;
    static const std::map<std::string, Op> kRType = {
        {"add", Op::kAdd}, {"sub", Op::kSub}, {"and", Op::kAnd},
        {"or", Op::kOr},   {"xor", Op::kXor}, {"slt", Op::kSlt},
        {"sll", Op::kSll}, {"srl", Op::kSrl}};
    static const std::map<std::string, Op> kBranch = {
        {"beq", Op::kBeq}, {"bne", Op::kBne}, {"blt", Op::kBlt}, {"bge", Op::kBge}};

    if (auto it = kRType.find(mn); it != kRType.end()) {
      if (!need(3)) continue;
      auto rd = reg(0), rs1 = reg(1), rs2 = reg(2);
      if (rd && rs1 && rs2)
        emit(lineno, {{it->second, *rd, *rs1, *rs2, 0, 0}});
    } else if (mn == "addi") {
      if (!need(3)) continue;
      auto rd = reg(0), rs1 = reg(1);
      auto v = imm(2);
      if (rd && rs1 && v) {
        if (*v < -2048 || *v > 2047) { err(lineno, "addi immediate out of range"); continue; }
        emit(lineno, {{Op::kAddi, *rd, *rs1, 0, int32_t(*v), 0}});
      }
    } else if (mn == "lui" || mn == "auipc") {
      if (!need(2)) continue;
      auto rd = reg(0);
      auto v = imm(1);
      if (rd && v) {
        if (*v < 0 || *v > 0xfffff) { err(lineno, mn + " immediate out of range"); continue; }
        emit(lineno, {{mn == "lui" ? Op::kLui : Op::kAuipc, *rd, 0, 0, int32_t(*v), 0}});
      }
    } else if (mn == "lw") {
      if (!need(2)) continue;
      auto rd = reg(0);
      auto m = memop(1);
      if (rd && m) emit(lineno, {{Op::kLw, *rd, m->second, 0, int32_t(m->first), 0}});
    } else if (mn == "sw") {
      if (!need(2)) continue;
      auto rs2 = reg(0);
      auto m = memop(1);
      if (rs2 && m) emit(lineno, {{Op::kSw, 0, m->second, *rs2, int32_t(m->first), 0}});
    } else if (auto it = kBranch.find(mn); it != kBranch.end()) {
      if (!need(3)) continue;
      auto rs1 = reg(0), rs2 = reg(1);
      if (rs1 && rs2) {
        SourceInstr si{{it->second, 0, *rs1, *rs2, 0, 0}};
        si.ref = RefKind::kLabel;
        si.sym = ops[2];
        emit(lineno, std::move(si));
      }
    } else if (mn == "jal") {
      uint8_t rd = 1;
      std::string target;
      if (ops.size() == 1) {
        target = ops[0];
      } else if (need(2)) {
        auto r = reg(0);
        if (!r) continue;
        rd = *r;
        target = ops[1];
      } else {
        continue;
      }
      SourceInstr si{{Op::kJal, rd, 0, 0, 0, 0}};
      si.ref = RefKind::kLabel;  // fixed up to kFunc during resolution
      si.sym = target;
      emit(lineno, std::move(si));
    } else if (mn == "j") {
      if (!need(1)) continue;
      SourceInstr si{{Op::kJal, 0, 0, 0, 0, 0}};
      si.ref = RefKind::kLabel;
      si.sym = ops[0];
      emit(lineno, std::move(si));
    } else if (mn == "call") {
      if (!need(1)) continue;
      SourceInstr si{{Op::kJal, 1, 0, 0, 0, 0}};
      si.ref = RefKind::kFunc;
      si.sym = ops[0];
      emit(lineno, std::move(si));
    } else if (mn == "jalr") {
      if (!need(2)) continue;
      auto rd = reg(0);
      auto m = memop(1);
      if (!rd || !m) continue;
      SourceInstr si{{Op::kJalr, *rd, m->second, 0, int32_t(m->first), 0}};
      si.is_return = (*rd == 0 && m->second == 1 && m->first == 0);
      if (si.is_return && had_targets) {
        err(lineno, "targets annotation on a return");
        take_targets();
      } else if (!si.is_return) {
        if (!had_targets) {
          err(lineno, "MissingTargetSet: indirect call without '# targets:' annotation");
          continue;
        }
        si.targets = take_targets();
      }
      emit(lineno, std::move(si));
    } else if (mn == "ret") {
      SourceInstr si{{Op::kJalr, 0, 1, 0, 0, 0}};
      si.is_return = true;
      emit(lineno, std::move(si));
    } else if (mn == "ecall") {
      emit(lineno, {{Op::kEcall, 0, 0, 0, 0, 0}});
    } else if (mn == "csrrw") {
      if (!need(3)) continue;
      auto rd = reg(0);
      auto csr = parse_csr(ops[1]);
      auto rs1 = reg(2);
      if (!csr) err(lineno, "bad csr '" + ops[1] + "'");
      if (rd && csr && rs1) emit(lineno, {{Op::kCsrrw, *rd, *rs1, 0, 0, *csr}});
    } else if (mn == "csrrwi") {
      if (!need(3)) continue;
      auto rd = reg(0);
      auto csr = parse_csr(ops[1]);
      auto v = imm(2);
      if (!csr) err(lineno, "bad csr '" + ops[1] + "'");
      if (rd && csr && v) {
        if (*v < 0 || *v > 31) { err(lineno, "csrrwi immediate out of range"); continue; }
        emit(lineno, {{Op::kCsrrwi, *rd, 0, 0, int32_t(*v), *csr}});
      }
    } else if (mn == "csrr") {
      if (!need(2)) continue;
      auto rd = reg(0);
      auto csr = parse_csr(ops[1]);
      if (!csr) err(lineno, "bad csr '" + ops[1] + "'");
      if (rd && csr) emit(lineno, {{Op::kCsrrw, *rd, 0, 0, 0, *csr}});
    } else if (mn == "mv") {
      if (!need(2)) continue;
      auto rd = reg(0), rs = reg(1);
      if (rd && rs) emit(lineno, {{Op::kAddi, *rd, *rs, 0, 0, 0}});
    } else if (mn == "nop") {
      emit(lineno, {isa::nop()});
    } else if (mn == "li") {
      if (!need(2)) continue;
      auto rd = reg(0);
      auto v = imm(1);
      if (rd && v) {
        int64_t val = *v;
        if (val < INT32_MIN || val > int64_t(UINT32_MAX)) {
          err(lineno, "li immediate out of range");
          continue;
        }
        int32_t w = int32_t(uint32_t(val));
        if (w >= -2048 && w <= 2047) {
          emit(lineno, {{Op::kAddi, *rd, 0, 0, w, 0}});
        } else {
          uint32_t hi = (uint32_t(w) + 0x800u) >> 12;
          int32_t lo = int32_t(uint32_t(w) << 20) >> 20;
          emit(lineno, {{Op::kLui, *rd, 0, 0, int32_t(hi & 0xfffff), 0}});
          emit(lineno, {{Op::kAddi, *rd, *rd, 0, lo, 0}});
        }
      }
    } else if (mn == "la") {
      if (!need(2)) continue;
      auto rd = reg(0);
      if (!valid_name(ops[1])) {
        err(lineno, "bad function name '" + ops[1] + "'");
        continue;
      }
      if (rd) {
        SourceInstr hi{{Op::kLui, *rd, 0, 0, 0, 0}};
        hi.ref = RefKind::kFuncHi;
        hi.sym = ops[1];
        emit(lineno, std::move(hi));
        SourceInstr lo{{Op::kAddi, *rd, *rd, 0, 0, 0}};
        lo.ref = RefKind::kFuncLo;
        lo.sym = ops[1];
        emit(lineno, std::move(lo));
      }
    } else {
      err(lineno, "unknown mnemonic '" + mn + "'");
    }

    if (!pending_targets.empty()) {
      err(targets_line, "targets annotation must immediately precede an indirect call");
      pending_targets.clear();
    }
  }

  if (pending_entry) diags.push_back({lineno, "'# entry' not followed by a function"});
  if (!pending_labels.empty())
    diags.push_back({lineno, "label at end of function without instruction"});

  // Resolve entry function.
  if (prog.entry.empty()) {
    if (prog.functions.size() == 1) {
      prog.entry = prog.functions[0].name;
    } else if (func_names.count("main")) {
      prog.entry = "main";
    } else if (!prog.functions.empty()) {
      diags.push_back({1, "no entry function ('# entry' or 'main' required)"});
    }
  }
  if (prog.functions.empty()) diags.push_back({1, "no functions defined"});

  // Resolve symbols: jal targets become kFunc when they name a function and
  // no local label shadows them.
  for (auto &fn : prog.functions) {
    for (auto &si : fn.instrs) {
      switch (si.ref) {
        case RefKind::kLabel:
          if (fn.labels.count(si.sym)) break;
          if (si.ins.op == isa::Op::kJal && func_names.count(si.sym)) {
            si.ref = RefKind::kFunc;
            break;
          }
          diags.push_back({si.line, "unresolved label '" + si.sym + "'"});
          break;
        case RefKind::kFunc:
        case RefKind::kFuncHi:
        case RefKind::kFuncLo:
          if (!func_names.count(si.sym))
            diags.push_back({si.line, "unresolved function '" + si.sym + "'"});
          break;
        case RefKind::kNone:
          break;
      }
      for (const auto &t : si.targets) {
        if (!func_names.count(t))
          diags.push_back({si.line, "indirect target names unknown function '" + t + "'"});
      }
    }
  }

  if (diags.empty()) res.program = std::move(prog);
  return res;
}

inline SourceProgram assemble_or_throw(const std::string &text) {
  auto r = assemble(text);
  if (!r.ok()) throw AssembleError(std::move(r.diagnostics));
  return std::move(*r.program);
}

}  // namespace scfi::asmparse

#endif  // SCFI_ASSEMBLER_HPP_
