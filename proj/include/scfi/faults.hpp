// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_FAULTS_HPP_
#define SCFI_FAULTS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "scfi/metadata.hpp"
#include "scfi/rng.hpp"
#include "scfi/scramble.hpp"
#include "scfi/sim.hpp"

namespace scfi::faults {

enum class Surface { kAR, kAIC, kAB, kAM, kAC };
enum class DataTarget {
  kRelAddr,     // DT1.1 relative addresses (branch/jump immediates)
  kAbsAddrReg,  // DT1.2a absolute address in a register
  kRetAddr,     // DT1.2b return address
  kPc,          // DT1.3 program counter
  kData,        // DT2 general-purpose data
  kInstruction, // DT3 instruction words
};

inline const char *to_string(Surface s) {
  switch (s) {
    case Surface::kAR: return "AR";
    case Surface::kAIC: return "AIC";
    case Surface::kAB: return "AB";
    case Surface::kAM: return "AM";
    case Surface::kAC: return "AC";
  }
  return "?";
}

inline const char *to_string(DataTarget t) {
  switch (t) {
    case DataTarget::kRelAddr: return "DT1.1";
    case DataTarget::kAbsAddrReg: return "DT1.2a";
    case DataTarget::kRetAddr: return "DT1.2b";
    case DataTarget::kPc: return "DT1.3";
    case DataTarget::kData: return "DT2";
    case DataTarget::kInstruction: return "DT3";
  }
  return "?";
}

// Feasible surface/data-target pairs: the PC lives in the core and its
// registers; instruction words pass through memory, cache, bus and decoder;
// plain data sits in registers or memory.
inline bool feasible(Surface s, DataTarget t) {
  switch (s) {
    case Surface::kAR:
      return t == DataTarget::kAbsAddrReg || t == DataTarget::kRetAddr ||
             t == DataTarget::kPc || t == DataTarget::kData;
    case Surface::kAIC:
    case Surface::kAB:
      return t == DataTarget::kRelAddr || t == DataTarget::kInstruction;
    case Surface::kAM:
      return t == DataTarget::kRelAddr || t == DataTarget::kInstruction ||
             t == DataTarget::kData;
    case Surface::kAC:
      return t == DataTarget::kInstruction || t == DataTarget::kPc;
  }
  return false;
}

struct Trigger {
  enum class Kind { kCycle, kPcMatch };
  Kind kind = Kind::kCycle;
  uint64_t value = 0;
};

struct Mutation {
  enum class Kind { kBitFlip, kDirectWrite };
  Kind kind = Kind::kBitFlip;
  uint64_t bits = 0;  // XOR mask, or the written value for kDirectWrite
};

struct FaultSpec {
  Surface surface;
  DataTarget target;
  Trigger trigger;
  Mutation mutation;
  uint8_t reg = 0;         // AR register index
  uint64_t addr = 0;       // AM / AIC location
  sim::InstrField field = sim::InstrField::kRs1;  // AC decoded-field target
};

class FaultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Applies the fault to a machine at its trigger point. AM mutates ciphertext
// flash (or data RAM for DT2); AIC a cached decrypted granule; AB the next
// fetched word; AR a register or the PC; AC a decoded instruction field.
inline void inject(sim::Simulator &s, const FaultSpec &f) {
  if (!feasible(f.surface, f.target))
    throw FaultError("infeasible surface/data-target combination");
  auto &st = s.state();
  switch (f.surface) {
    case Surface::kAR:
      if (f.target == DataTarget::kPc) {
        st.pc = f.mutation.kind == Mutation::Kind::kDirectWrite
                    ? uint32_t(f.mutation.bits)
                    : st.pc ^ uint32_t(f.mutation.bits);
      } else {
        if (f.reg == 0 || f.reg > 31) throw FaultError("bad register target");
        st.gpr[f.reg] = f.mutation.kind == Mutation::Kind::kDirectWrite
                            ? uint32_t(f.mutation.bits)
                            : st.gpr[f.reg] ^ uint32_t(f.mutation.bits);
      }
      break;
    case Surface::kAM: {
      if (f.target == DataTarget::kData) {
        uint64_t off = f.addr - sim::kDmemBase;
        if (f.addr < sim::kDmemBase || off + 4 > sim::kDmemSize)
          throw FaultError("AM data fault outside data RAM");
        uint32_t v = uint32_t(st.dmem[off]) | uint32_t(st.dmem[off + 1]) << 8 |
                     uint32_t(st.dmem[off + 2]) << 16 |
                     uint32_t(st.dmem[off + 3]) << 24;
        v ^= uint32_t(f.mutation.bits);
        st.dmem[off] = uint8_t(v);
        st.dmem[off + 1] = uint8_t(v >> 8);
        st.dmem[off + 2] = uint8_t(v >> 16);
        st.dmem[off + 3] = uint8_t(v >> 24);
      } else {
        uint64_t granule = f.addr & ~7ull;
        auto it = s.flash().word_map.find(granule);
        if (it == s.flash().word_map.end())
          throw FaultError("AM fault outside flash image");
        it->second ^= f.mutation.bits;
        st.icache.erase(granule);  // memory fault, not a cache fault
      }
      break;
    }
    case Surface::kAIC: {
      uint64_t granule = f.addr & ~7ull;
      auto it = st.icache.find(granule);
      if (it == st.icache.end()) throw FaultError("AIC target not cached");
      it->second ^= f.mutation.bits;
      break;
    }
    case Surface::kAB:
      s.arm_bus_flip({uint32_t(f.mutation.bits)});
      break;
    case Surface::kAC:
      if (f.target == DataTarget::kPc) {
        st.pc ^= uint32_t(f.mutation.bits);
      } else {
        s.arm_decode_flip({f.field, uint32_t(f.mutation.bits)});
      }
      break;
  }
}

enum class OutcomeClass { kDetectedIllegal, kDetectedFault, kBenign, kSilentCfm, kHang };

inline const char *to_string(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::kDetectedIllegal: return "DETECTED_ILLEGAL";
    case OutcomeClass::kDetectedFault: return "DETECTED_FAULT";
    case OutcomeClass::kBenign: return "BENIGN";
    case OutcomeClass::kSilentCfm: return "SILENT_CFM";
    case OutcomeClass::kHang: return "HANG";
  }
  return "?";
}

struct Goal {
  uint64_t pc = 0;  // attacker's landing point
};

struct Outcome {
  OutcomeClass cls;
  std::optional<uint64_t> detection_latency;  // instructions, DETECTED_* only
  std::optional<uint64_t> goal_pc;
  bool result_match = false;
};

// SILENT_CFM: the trace reaches the goal and at least G instructions execute
// from there without trapping. BENIGN: run completed via ecall without
// reaching the goal (result_match records whether it matched the baseline).
inline Outcome classify(const sim::RunResult &r, const sim::RunResult &baseline,
                        std::optional<Goal> goal, uint64_t inject_cycle,
                        unsigned min_goal_instrs) {
  Outcome out{};
  out.result_match = r.termination == baseline.termination &&
                     r.exit_value == baseline.exit_value;
  const bool trapped = r.termination == sim::Termination::kIllegalTrap ||
                       r.termination == sim::Termination::kFetchFault ||
                       r.termination == sim::Termination::kMemFault;
  if (goal) {
    for (size_t i = inject_cycle; i < r.trace.size(); ++i) {
      if (r.trace[i].pc == uint32_t(goal->pc)) {
        uint64_t survived = r.trace.size() - i - (trapped ? 1 : 0);
        if (survived >= min_goal_instrs) {
          out.cls = OutcomeClass::kSilentCfm;
          out.goal_pc = goal->pc;
          return out;
        }
        break;
      }
    }
  }
  switch (r.termination) {
    case sim::Termination::kIllegalTrap:
      out.cls = OutcomeClass::kDetectedIllegal;
      out.detection_latency = r.cycles - inject_cycle;
      break;
    case sim::Termination::kFetchFault:
    case sim::Termination::kMemFault:
      out.cls = OutcomeClass::kDetectedFault;
      out.detection_latency = r.cycles - inject_cycle;
      break;
    case sim::Termination::kCycleLimit:
      out.cls = OutcomeClass::kHang;
      break;
    case sim::Termination::kEcallExit:
      out.cls = OutcomeClass::kBenign;
      break;
  }
  return out;
}

// Runs one machine with a single armed fault, tracing from reset.
struct TrialResult {
  sim::RunResult run;
  uint64_t inject_cycle = 0;
  bool triggered = false;
  uint32_t tweak_at_injection = 0;
};

inline TrialResult run_with_fault(sim::Simulator machine, const FaultSpec &f,
                                  uint64_t max_cycles) {
  TrialResult tr;
  sim::RunResult &r = tr.run;
  bool armed = true;
  while (machine.state().mcycle < max_cycles) {
    auto &st = machine.state();
    if (armed) {
      bool fire = f.trigger.kind == Trigger::Kind::kCycle
                      ? st.mcycle == f.trigger.value
                      : st.pc == uint32_t(f.trigger.value);
      if (fire) {
        tr.inject_cycle = st.mcycle;
        tr.tweak_at_injection = st.csr_tweak;
        inject(machine, f);
        tr.triggered = true;
        armed = false;
      }
    }
    uint32_t pc = st.pc;
    uint32_t tweak = st.csr_tweak;
    sim::StepEvent e = machine.step();
    const char *mn = e == sim::StepEvent::kFetchFault ? "<fetch>"
                     : e == sim::StepEvent::kIllegalTrap
                         ? "<illegal>"
                         : isa::mnemonic(machine.last_ins().op);
    r.trace.push_back({pc, tweak, machine.last_word(), mn});
    r.cycles = machine.state().mcycle;
    r.exit_value = machine.state().gpr[10];
    switch (e) {
      case sim::StepEvent::kRetired: continue;
      case sim::StepEvent::kEcallExit: r.termination = sim::Termination::kEcallExit; return tr;
      case sim::StepEvent::kIllegalTrap: r.termination = sim::Termination::kIllegalTrap; return tr;
      case sim::StepEvent::kFetchFault: r.termination = sim::Termination::kFetchFault; return tr;
      case sim::StepEvent::kMemFault: r.termination = sim::Termination::kMemFault; return tr;
    }
  }
  r.termination = sim::Termination::kCycleLimit;
  return tr;
}

// ---- Campaigns ----

enum class CfmGoal { kCfm1, kCfm3, kNone };

inline const char *to_string(CfmGoal g) {
  switch (g) {
    case CfmGoal::kCfm1: return "CFM1";
    case CfmGoal::kCfm3: return "CFM3";
    case CfmGoal::kNone: return "-";
  }
  return "?";
}

struct CellConfig {
  Surface surface = Surface::kAR;
  DataTarget target = DataTarget::kPc;
  CfmGoal goal = CfmGoal::kCfm1;
  uint64_t trials = 100;
};

struct CampaignConfig {
  std::vector<CellConfig> cells;
  unsigned min_goal_instrs = 4;  // G
  uint64_t max_cycles = 100000;
  uint64_t seed = 1;
  bool parallel = false;
};

struct CellStats {
  CellConfig config;
  uint64_t trials = 0;
  uint64_t discarded = 0;  // unreachable trigger / unusable landing
  std::map<std::string, uint64_t> histogram;
  uint64_t detected = 0;
  uint64_t silent = 0;
  uint64_t cross_function_redirects = 0;
  uint64_t wrong_tweak_landings = 0;
  uint64_t latency_sum = 0;
  uint64_t latency_count = 0;

  double detection_rate() const {
    return trials ? double(detected) / double(trials) : 0.0;
  }
  double mean_latency() const {
    return latency_count ? double(latency_sum) / double(latency_count) : 0.0;
  }
};

struct CampaignReport {
  std::vector<CellStats> cells;
  uint64_t seed = 0;
  std::string config_digest;
};

// The program bundle a campaign runs against. body_tweak gives each
// function's own domain so goal selection can tell body granules apart from
// call-transition granules (which carry the callee's tweak).
struct CampaignTarget {
  scramble::FlashImage flash;
  bool scrambled = true;
  meta::MetadataFile metadata;
  uint64_t entry = 0;
  uint32_t initial_tweak = 0;
  std::map<std::string, uint32_t> body_tweak;
};

// Recovers per-function body tweaks from metadata alone: the final granule of
// a function (shared epilogue or trailing pad) is always in the body domain.
inline std::map<std::string, uint32_t> derive_body_tweaks(
    const meta::MetadataFile &m) {
  std::map<std::string, uint32_t> out;
  for (const auto &f : m.funcs)
    if (!f.blocks.empty()) out[f.name] = f.blocks.back().second;
  return out;
}

// Probability that a garbled instruction stream traps within g instructions,
// predicted from the decoder's illegal density.
inline double predicted_detection_rate(double illegal_density, unsigned g) {
  return 1.0 - std::pow(1.0 - illegal_density, double(g));
}

namespace detail {

inline uint64_t fnv1a(const std::string &s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct TrialOutcome {
  Outcome outcome;
  bool discarded = false;
  bool cross_function = false;
  bool wrong_tweak = false;
};

// Deterministic per-trial generation and execution.
inline TrialOutcome run_trial(const CampaignTarget &t, const CellConfig &cell,
                              const CampaignConfig &cfg,
                              const sim::RunResult &baseline, size_t cell_idx,
                              uint64_t trial) {
  TrialOutcome to{};
  SplitMix64 rng(cfg.seed ^ (uint64_t(cell_idx + 1) << 40) ^
                 (trial * 0x9e3779b97f4a7c15ull));

  uint64_t baseline_cycles = baseline.cycles;
  if (baseline_cycles < 2) {
    to.discarded = true;
    return to;
  }

  FaultSpec f{};
  f.surface = cell.surface;
  f.target = cell.target;
  f.trigger = {Trigger::Kind::kCycle, 1 + rng.next_below(baseline_cycles - 1)};

  std::optional<Goal> goal;
  uint64_t landing = 0;

  if (cell.target == DataTarget::kPc &&
      (cell.goal == CfmGoal::kCfm1 || cell.goal == CfmGoal::kCfm3)) {
    // Redirect the PC out of a function body. Trigger cycles executing in
    // call-transition granules (callee-domain call/restore sequences, entry
    // and exit thunks) are resampled: those granules belong to a call-graph
    // edge, so a jump from or into them is not a CFM1 escape.
    const meta::MetadataFile::Func *cur = nullptr;
    uint32_t pc_before = 0;
    for (int attempt = 0; attempt < 64 && !cur; ++attempt) {
      f.trigger.value = 1 + rng.next_below(baseline_cycles - 1);
      pc_before = baseline.trace[f.trigger.value].pc;
      const auto *fn = t.metadata.function_of(pc_before);
      if (!fn) continue;
      auto bt = t.body_tweak.find(fn->name);
      if (bt == t.body_tweak.end()) continue;
      if (baseline.trace[f.trigger.value].tweak != bt->second) continue;
      cur = fn;
    }
    if (!cur) {
      to.discarded = true;
      return to;
    }
    // Candidate landings are granules in the landing function's own body
    // domain.
    auto body_blocks = [&](const meta::MetadataFile::Func &fn,
                           uint32_t tweak) {
      std::vector<uint64_t> offs;
      for (const auto &[off, tw] : fn.blocks)
        if (tw == tweak) offs.push_back(off);
      return offs;
    };
    if (cell.goal == CfmGoal::kCfm1) {
      struct Candidate {
        const meta::MetadataFile::Func *fn;
        std::vector<uint64_t> offs;
      };
      std::vector<Candidate> cands;
      for (const auto &fn : t.metadata.funcs) {
        if (&fn == cur) continue;
        auto bt = t.body_tweak.find(fn.name);
        if (bt == t.body_tweak.end()) continue;
        auto offs = body_blocks(fn, bt->second);
        if (!offs.empty()) cands.push_back({&fn, std::move(offs)});
      }
      if (cands.empty()) {
        to.discarded = true;
        return to;
      }
      const auto &dst = cands[rng.next_below(cands.size())];
      landing = dst.fn->start + dst.offs[rng.next_below(dst.offs.size())];
      to.cross_function = true;
    } else {
      // CFM3: a different granule of the same function, same tweak domain,
      // so the redirect is invisible to the scrambler.
      uint32_t active = baseline.trace[f.trigger.value].tweak;
      auto offs = body_blocks(*cur, active);
      uint64_t cur_off = (pc_before & ~7u) - cur->start;
      std::erase(offs, cur_off);
      if (offs.empty()) {
        to.discarded = true;
        return to;
      }
      landing = cur->start + offs[rng.next_below(offs.size())];
    }
    f.mutation = {Mutation::Kind::kDirectWrite, landing};
    goal = Goal{landing};
  } else {
    // Bit-flip faults at the configured surface.
    switch (cell.surface) {
      case Surface::kAR: {
        f.reg = uint8_t(1 + rng.next_below(31));
        f.mutation = {Mutation::Kind::kBitFlip, 1ull << rng.next_below(32)};
        if (cell.target == DataTarget::kRetAddr) f.reg = 1;
        break;
      }
      case Surface::kAM: {
        if (cell.target == DataTarget::kData) {
          f.addr = sim::kDmemBase + 4 * rng.next_below(sim::kDmemSize / 4);
          f.mutation = {Mutation::Kind::kBitFlip, 1ull << rng.next_below(32)};
        } else {
          auto it = t.flash.word_map.begin();
          std::advance(it, rng.next_below(t.flash.word_map.size()));
          f.addr = it->first;
          f.mutation = {Mutation::Kind::kBitFlip, 1ull << rng.next_below(64)};
        }
        break;
      }
      case Surface::kAIC:
        // Fault a granule already fetched: the one the previous instruction
        // came from is resident unless a tweak write flushed it.
        f.addr = baseline.trace[f.trigger.value - 1].pc & ~7u;
        f.mutation = {Mutation::Kind::kBitFlip, 1ull << rng.next_below(64)};
        break;
      case Surface::kAB:
        f.mutation = {Mutation::Kind::kBitFlip, 1ull << rng.next_below(32)};
        break;
      case Surface::kAC:
        f.field = sim::InstrField(rng.next_below(4));
        f.mutation = {Mutation::Kind::kBitFlip, 1ull << rng.next_below(5)};
        break;
    }
  }

  sim::Simulator machine(t.flash, t.scrambled, t.entry, t.initial_tweak);
  TrialResult tr;
  try {
    tr = run_with_fault(std::move(machine), f, cfg.max_cycles);
  } catch (const FaultError &) {
    // AIC target evicted by a flush, or an AM address outside the image.
    to.discarded = true;
    return to;
  }
  if (!tr.triggered) {
    to.discarded = true;
    return to;
  }

  to.outcome = classify(tr.run, baseline, goal, tr.inject_cycle, cfg.min_goal_instrs);
  if (goal) {
    auto block_tw = t.metadata.tweak_at(landing);
    to.wrong_tweak = block_tw && *block_tw != tr.tweak_at_injection;
  }
  return to;
}

}  // namespace detail

inline CampaignReport campaign(const CampaignTarget &t, const CampaignConfig &cfg) {
  for (const auto &c : cfg.cells)
    if (!feasible(c.surface, c.target))
      throw FaultError("campaign cell has infeasible surface/target pair");

  sim::Simulator base_sim(t.flash, t.scrambled, t.entry, t.initial_tweak);
  sim::RunResult baseline = base_sim.run(cfg.max_cycles, /*trace=*/true);
  if (baseline.termination != sim::Termination::kEcallExit)
    throw FaultError("baseline run did not exit cleanly");

  CampaignReport report;
  report.seed = cfg.seed;
  {
    std::ostringstream os;
    for (const auto &c : cfg.cells)
      os << to_string(c.surface) << "/" << to_string(c.target) << "/"
         << to_string(c.goal) << "/" << c.trials << ";";
    os << "G=" << cfg.min_goal_instrs << ";max=" << cfg.max_cycles;
    std::ostringstream hex;
    hex << std::hex << detail::fnv1a(os.str());
    report.config_digest = hex.str();
  }

  for (size_t ci = 0; ci < cfg.cells.size(); ++ci) {
    const CellConfig &cell = cfg.cells[ci];
    std::vector<detail::TrialOutcome> outcomes(cell.trials);
    auto work = [&](uint64_t lo, uint64_t hi) {
      for (uint64_t i = lo; i < hi; ++i)
        outcomes[i] = detail::run_trial(t, cell, cfg, baseline, ci, i);
    };
    if (cfg.parallel && cell.trials >= 16) {
      unsigned n = std::max(2u, std::thread::hardware_concurrency());
      std::vector<std::thread> threads;
      uint64_t chunk = (cell.trials + n - 1) / n;
      for (unsigned k = 0; k < n; ++k) {
        uint64_t lo = k * chunk, hi = std::min<uint64_t>(cell.trials, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back(work, lo, hi);
      }
      for (auto &th : threads) th.join();
    } else {
      work(0, cell.trials);
    }

    CellStats st;
    st.config = cell;
    for (const auto &o : outcomes) {
      if (o.discarded) {
        ++st.discarded;
        continue;
      }
      ++st.trials;
      ++st.histogram[to_string(o.outcome.cls)];
      if (o.outcome.cls == OutcomeClass::kDetectedIllegal ||
          o.outcome.cls == OutcomeClass::kDetectedFault)
        ++st.detected;
      if (o.outcome.cls == OutcomeClass::kSilentCfm) ++st.silent;
      if (o.cross_function) ++st.cross_function_redirects;
      if (o.wrong_tweak) ++st.wrong_tweak_landings;
      if (o.outcome.detection_latency) {
        st.latency_sum += *o.outcome.detection_latency;
        ++st.latency_count;
      }
    }
    report.cells.push_back(std::move(st));
  }
  return report;
}

inline std::optional<Surface> surface_from_string(const std::string &s) {
  if (s == "AR") return Surface::kAR;
  if (s == "AIC") return Surface::kAIC;
  if (s == "AB") return Surface::kAB;
  if (s == "AM") return Surface::kAM;
  if (s == "AC") return Surface::kAC;
  return std::nullopt;
}

inline std::optional<DataTarget> target_from_string(const std::string &s) {
  if (s == "DT1.1") return DataTarget::kRelAddr;
  if (s == "DT1.2a") return DataTarget::kAbsAddrReg;
  if (s == "DT1.2b") return DataTarget::kRetAddr;
  if (s == "DT1.3") return DataTarget::kPc;
  if (s == "DT2") return DataTarget::kData;
  if (s == "DT3") return DataTarget::kInstruction;
  return std::nullopt;
}

inline std::optional<CfmGoal> goal_from_string(const std::string &s) {
  if (s == "CFM1") return CfmGoal::kCfm1;
  if (s == "CFM3") return CfmGoal::kCfm3;
  if (s == "none" || s == "-") return CfmGoal::kNone;
  return std::nullopt;
}

// TOML-like campaign file: top-level `key = value` lines set globals, each
// `[cell]` section opens one campaign cell. `#` starts a comment.
//
//   seed = 1
//   goal_instrs = 4
//   [cell]
//   surface = AR
//   target = DT1.3
//   goal = CFM1
//   trials = 1000
inline CampaignConfig parse_campaign_config(const std::string &text) {
  CampaignConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  CellConfig *cell = nullptr;
  auto fail = [&](const std::string &m) {
    throw FaultError("line " + std::to_string(lineno) + ": " + m);
  };
  auto trim = [](std::string s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto p = line.find('#'); p != std::string::npos) line = line.substr(0, p);
    line = trim(line);
    if (line.empty()) continue;
    if (line == "[cell]") {
      cfg.cells.emplace_back();
      cell = &cfg.cells.back();
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) fail("expected 'key = value'");
    auto num = [&]() -> uint64_t {
      try {
        size_t pos = 0;
        uint64_t v = std::stoull(val, &pos, 0);
        if (pos != val.size()) fail("bad number '" + val + "'");
        return v;
      } catch (const FaultError &) {
        throw;
      } catch (...) {
        fail("bad number '" + val + "'");
        return 0;
      }
    };
    if (!cell) {
      if (key == "seed") cfg.seed = num();
      else if (key == "goal_instrs") cfg.min_goal_instrs = unsigned(num());
      else if (key == "max_cycles") cfg.max_cycles = num();
      else if (key == "parallel") {
        if (val == "true") cfg.parallel = true;
        else if (val == "false") cfg.parallel = false;
        else fail("parallel must be true or false");
      } else {
        fail("unknown global key '" + key + "'");
      }
    } else {
      if (key == "surface") {
        auto s = surface_from_string(val);
        if (!s) fail("unknown surface '" + val + "'");
        cell->surface = *s;
      } else if (key == "target") {
        auto t = target_from_string(val);
        if (!t) fail("unknown data target '" + val + "'");
        cell->target = *t;
      } else if (key == "goal") {
        auto g = goal_from_string(val);
        if (!g) fail("unknown goal '" + val + "'");
        cell->goal = *g;
      } else if (key == "trials") {
        cell->trials = num();
        if (cell->trials < 1) fail("trials must be >= 1");
      } else {
        fail("unknown cell key '" + key + "'");
      }
    }
  }
  if (cfg.cells.empty()) throw FaultError("campaign config defines no [cell]");
  for (const auto &c : cfg.cells)
    if (!feasible(c.surface, c.target))
      throw FaultError(std::string("infeasible cell ") + to_string(c.surface) +
                       "/" + to_string(c.target));
  return cfg;
}

inline nlohmann::json to_json(const CampaignReport &rep) {
  nlohmann::json j;
  j["seed"] = rep.seed;
  j["config_digest"] = rep.config_digest;
  j["cells"] = nlohmann::json::array();
  for (const auto &c : rep.cells) {
    nlohmann::json cell;
    cell["surface"] = to_string(c.config.surface);
    cell["target"] = to_string(c.config.target);
    cell["goal"] = to_string(c.config.goal);
    cell["trials"] = c.trials;
    cell["discarded"] = c.discarded;
    cell["histogram"] = c.histogram;
    cell["detected"] = c.detected;
    cell["silent"] = c.silent;
    cell["detection_rate"] = c.detection_rate();
    cell["mean_detection_latency"] = c.mean_latency();
    cell["cross_function_redirects"] = c.cross_function_redirects;
    cell["wrong_tweak_landings"] = c.wrong_tweak_landings;
    j["cells"].push_back(std::move(cell));
  }
  return j;
}

inline std::string to_table(const CampaignReport &rep) {
  std::ostringstream os;
  os << "surface target  goal  trials detect%  latency  silent\n";
  for (const auto &c : rep.cells) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-7s %-7s %-5s %6llu %7.2f %8.2f %7llu\n",
                  to_string(c.config.surface), to_string(c.config.target),
                  to_string(c.config.goal),
                  static_cast<unsigned long long>(c.trials),
                  100.0 * c.detection_rate(), c.mean_latency(),
                  static_cast<unsigned long long>(c.silent));
    os << buf;
  }
  return os.str();
}

}  // namespace scfi::faults

#endif  // SCFI_FAULTS_HPP_
